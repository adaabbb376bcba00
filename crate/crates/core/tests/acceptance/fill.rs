use geoscene::geom::Point2D;
use geoscene::terrain::{fill_gaps, HeightField};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::{ensure, Outcome};

const PLANAR_TOL: f64 = 1e-6;
const FIELDS: usize = 20;

fn punch_blobs(rng: &mut StdRng, hf: &mut HeightField, blobs: usize, max_side: usize) {
    for _ in 0..blobs {
        let (w, h) = (rng.random_range(1..=max_side), rng.random_range(1..=max_side));
        let (c0, r0) = (rng.random_range(0..hf.ncols - w), rng.random_range(0..hf.nrows - h));
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                let nodata = hf.nodata;
                hf.set(c, r, nodata);
            }
        }
    }
}

fn constant_fields(rng: &mut StdRng) -> Outcome {
    let mut filled = 0;
    for case in 0..FIELDS {
        let z = rng.random_range(-400.0..4000.0) + rng.random::<f64>();
        let mut hf = HeightField::constant(30, 30, Point2D::new(rng.random_range(-1e4..1e4), 0.0), 5.0, z);
        punch_blobs(rng, &mut hf, 6, 5);
        let (out, report) = fill_gaps(&hf, 50.0).map_err(|e| e.to_string())?;
        ensure!(report.unfilled == 0, "constant case {case}: {} cells unfilled", report.unfilled);
        ensure!(out.values.iter().all(|&v| v == z), "constant case {case}: fill departs from {z}");
        filled += report.filled;
    }
    Ok(format!("{filled} constant-field cells exact"))
}

fn planar_fields(rng: &mut StdRng) -> Outcome {
    let mut worst = 0.0f64;
    let mut gaps = 0;
    for case in 0..FIELDS {
        let (a, bx, by) = (rng.random_range(-50.0..500.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let origin = Point2D::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
        let plane = |p: Point2D| a + bx * p.x + by * p.y;
        let mut hf = HeightField::from_fn(40, 40, origin, 2.0, plane);
        let mut holes = Vec::new();
        // Isolated gaps: every neighbor of a gap stays measured.
        for r in (1..39).step_by(3) {
            for c in (1..39).step_by(3) {
                if rng.random_bool(0.5) {
                    let nodata = hf.nodata;
                    hf.set(c, r, nodata);
                    holes.push((c, r));
                }
            }
        }
        let (out, report) = fill_gaps(&hf, 10.0).map_err(|e| e.to_string())?;
        ensure!(report.filled == holes.len() && report.unfilled == 0, "planar case {case}: report {report:?}");
        for &(c, r) in &holes {
            let err = (out.get(c, r) - plane(out.cell_center(c, r))).abs();
            worst = worst.max(err);
            ensure!(err <= PLANAR_TOL, "planar case {case}: cell ({c}, {r}) off by {err:e}");
        }
        gaps += holes.len();
    }
    Ok(format!("{gaps} planar gaps, worst error {worst:.1e}"))
}

fn idempotence(rng: &mut StdRng) -> Outcome {
    for case in 0..FIELDS {
        let phase = rng.random_range(0.0..6.0);
        let mut hf = HeightField::from_fn(50, 40, Point2D::new(0.0, 0.0), 1.0, |p| 10.0 * (p.x / 7.0 + phase).sin() + p.y / 3.0);
        punch_blobs(rng, &mut hf, 8, 12);
        let (first, r1) = fill_gaps(&hf, 4.0).map_err(|e| e.to_string())?;
        let (second, r2) = fill_gaps(&first, 4.0).map_err(|e| e.to_string())?;
        ensure!(r2.filled == 0 && r2.unfilled == r1.unfilled, "case {case}: second pass reported {r2:?} after {r1:?}");
        ensure!(
            first.values.iter().zip(&second.values).all(|(a, b)| a.to_bits() == b.to_bits()),
            "case {case}: second pass changed values"
        );
        let valid: Vec<f64> = hf.values.iter().copied().filter(|&v| v != hf.nodata).collect();
        let (lo, hi) = valid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for (i, (&before, &after)) in hf.values.iter().zip(&first.values).enumerate() {
            if before != hf.nodata {
                ensure!(before.to_bits() == after.to_bits(), "case {case}: measured cell {i} changed");
            } else if after != first.nodata {
                ensure!((lo..=hi).contains(&after), "case {case}: filled {after} outside [{lo}, {hi}]");
            }
        }
    }
    Ok(format!("{FIELDS} fields idempotent"))
}

fn unreachable(rng: &mut StdRng) -> Outcome {
    let mut unreached = 0;
    for case in 0..FIELDS {
        let mut hf = HeightField::constant(40, 40, Point2D::new(0.0, 0.0), 1.0, 3.0);
        let radius = rng.random_range(1.5..5.0);
        punch_blobs(rng, &mut hf, 3, 16);
        let (out, report) = fill_gaps(&hf, radius).map_err(|e| e.to_string())?;
        let measured: Vec<(i64, i64)> =
            (0..40 * 40).filter(|&i| hf.values[i] != hf.nodata).map(|i| ((i % 40) as i64, (i / 40) as i64)).collect();
        let mut want = 0;
        for i in (0..40 * 40).filter(|&i| hf.values[i] == hf.nodata) {
            let (c, r) = ((i % 40) as i64, (i / 40) as i64);
            let nearest =
                measured.iter().map(|&(mc, mr)| (((mc - c).pow(2) + (mr - r).pow(2)) as f64).sqrt()).fold(f64::INFINITY, f64::min);
            let reachable = nearest <= radius;
            want += usize::from(!reachable);
            ensure!((out.values[i] != out.nodata) == reachable, "case {case}: cell {i} at distance {nearest} with radius {radius}");
        }
        ensure!(report.unfilled == want, "case {case}: reported {} unfilled, oracle {want}", report.unfilled);
        unreached += want;
    }
    Ok(format!("{unreached} unreachable cells reported"))
}

pub fn run() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xf111);
    let parts = [constant_fields(&mut rng)?, planar_fields(&mut rng)?, idempotence(&mut rng)?, unreachable(&mut rng)?];
    Ok(parts.join("; "))
}
