use geoscene::geom::{ClassCode, Point2D, Rect};
use geoscene::ingest::FeatureCollection;
use geoscene::landcover::{rasterize_classes, ClassTable, UNKNOWN};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::oracle::{even_odd, random_polygon};
use crate::{ensure, Outcome};

const LAYOUTS: usize = 20;
const N: usize = 64;
/// Includes a code missing from the default table.
const CODES: [ClassCode; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 9];

/// Water, then infrastructure, vegetation, land, then unlisted codes; ties
/// go to the lower code.
fn rank(code: ClassCode) -> (u8, ClassCode) {
    let category = match code {
        0 => 0,
        2 | 3 => 1,
        1 | 4 => 2,
        5..=7 => 3,
        _ => u8::MAX,
    };
    (category, code)
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x2a57);
    let table = ClassTable::default();
    let mut covered = 0usize;
    for layout in 0..LAYOUTS {
        let (x0, y0) = (rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        let bounds = Rect::new(x0, y0, x0 + rng.random_range(50.0..400.0), y0 + rng.random_range(50.0..400.0));
        let span = bounds.width().min(bounds.height());
        let mut polys = Vec::new();
        let mut features = Vec::new();
        for _ in 0..rng.random_range(3..12) {
            let code = CODES[rng.random_range(0..CODES.len())];
            let c = Point2D::new(
                rng.random_range(bounds.min.x - 0.2 * span..bounds.max.x + 0.2 * span),
                rng.random_range(bounds.min.y - 0.2 * span..bounds.max.y + 0.2 * span),
            );
            let radius = rng.random_range(0.05..0.4) * span;
            let (poly, rings) = random_polygon(&mut rng, c, radius, 2, code);
            polys.push(poly);
            features.push((code, rings));
        }
        let fc = FeatureCollection::from_polygons(polys, bounds);
        let raster = rasterize_classes(&fc, N, bounds, &table).map_err(|e| e.to_string())?;
        ensure!(raster.size == N && raster.cells.len() == N * N, "layout {layout}: raster is {} cells", raster.cells.len());

        let (cw, ch) = (bounds.width() / N as f64, bounds.height() / N as f64);
        for row in 0..N {
            for col in 0..N {
                let p = Point2D::new(bounds.min.x + (col as f64 + 0.5) * cw, bounds.min.y + (row as f64 + 0.5) * ch);
                let want = features
                    .iter()
                    .filter(|(_, rings)| even_odd(p, rings))
                    .map(|&(code, _)| code)
                    .min_by_key(|&c| rank(c))
                    .unwrap_or(UNKNOWN);
                let got = raster.get(col, row);
                ensure!(got == want, "layout {layout}: cell ({col}, {row}) is {got}, oracle says {want}");
                covered += usize::from(want != UNKNOWN);
            }
        }
    }
    Ok(format!("{LAYOUTS} layouts at N = {N}, {} cells equal ({covered} covered)", LAYOUTS * N * N))
}
