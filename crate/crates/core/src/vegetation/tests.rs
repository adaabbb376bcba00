use super::*;
use crate::landcover::GRASS;
use proptest::prelude::*;

fn addr(x: u32, y: u32) -> TileAddress {
    TileAddress::new(4, x, y, "trees").unwrap()
}

fn raster(w: usize, h: usize, pixels: Vec<u8>) -> CrownRaster {
    CrownRaster::new(addr(0, 0), w, h, Rect::new(0.0, 0.0, w as f64, h as f64), pixels).unwrap()
}

fn paint(px: &mut [u8], w: usize, cells: impl IntoIterator<Item = (usize, usize)>, v: u8) {
    for (c, r) in cells {
        px[r * w + c] = v;
    }
}

/// Component count by union over all 8-adjacent nonzero pixel pairs.
fn oracle_components(r: &CrownRaster) -> Vec<usize> {
    let n = r.width * r.height;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            i = p[i];
        }
        i
    }
    for row in 0..r.height {
        for col in 0..r.width {
            if r.get(col, row) == 0 {
                continue;
            }
            for (dc, dr) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                let (nc, nr) = (col as i64 + dc, row as i64 + dr);
                if nc < 0 || nc >= r.width as i64 || nr >= r.height as i64 || r.get(nc as usize, nr as usize) == 0 {
                    continue;
                }
                let (a, b) = (find(&mut parent, row * r.width + col), find(&mut parent, nr as usize * r.width + nc as usize));
                parent[a] = b;
            }
        }
    }
    let mut sizes = std::collections::HashMap::new();
    for i in 0..n {
        if r.pixels[i] != 0 {
            *sizes.entry(find(&mut parent, i)).or_insert(0usize) += 1;
        }
    }
    let mut v: Vec<usize> = sizes.into_values().collect();
    v.sort_unstable();
    v
}

/// Cuts `r` at the given column and row indices into address-adjacent tiles.
fn split_grid(r: &CrownRaster, xcuts: &[usize], ycuts: &[usize]) -> BTreeMap<TileAddress, CrownRaster> {
    let (pw, ph) = r.pixel_size();
    let edges = |cuts: &[usize], n: usize| {
        let mut e = vec![0];
        e.extend_from_slice(cuts);
        e.push(n);
        e.windows(2).map(|w| w[0]..w[1]).collect::<Vec<_>>()
    };
    let mut out = BTreeMap::new();
    for (ty, rows) in edges(ycuts, r.height).into_iter().enumerate() {
        for (tx, cols) in edges(xcuts, r.width).into_iter().enumerate() {
            let mut px = Vec::new();
            for row in rows.clone() {
                for col in cols.clone() {
                    px.push(r.get(col, row));
                }
            }
            let bounds = Rect::new(
                r.bounds.min.x + cols.start as f64 * pw,
                r.bounds.max.y - rows.end as f64 * ph,
                r.bounds.min.x + cols.end as f64 * pw,
                r.bounds.max.y - rows.start as f64 * ph,
            );
            let a = addr(tx as u32, ty as u32);
            out.insert(a.clone(), CrownRaster::new(a, cols.len(), rows.len(), bounds, px).unwrap());
        }
    }
    out
}

fn split4(r: &CrownRaster, cx: usize, cy: usize) -> BTreeMap<TileAddress, CrownRaster> {
    split_grid(r, &[cx], &[cy])
}

fn detect_and_merge(tiles: &BTreeMap<TileAddress, CrownRaster>, params: &CrownParams) -> Vec<TreeInstance> {
    let per_tile = tiles.iter().map(|(a, r)| (a.clone(), detect_crowns(r, params))).collect();
    merge_cross_tile(&per_tile, tiles, params).unwrap()
}

fn sorted_centroids(v: &[TreeInstance]) -> Vec<(f64, f64)> {
    let mut c: Vec<(f64, f64)> = v.iter().map(|i| (i.position.x, i.position.y)).collect();
    c.sort_by(|a, b| a.partial_cmp(b).unwrap());
    c
}

#[test]
fn two_blobs() {
    let mut px = vec![0u8; 20 * 10];
    paint(&mut px, 20, (1..6).flat_map(|c| (1..3).map(move |r| (c, r))), 100);
    paint(&mut px, 20, (12..17).flat_map(|c| (5..7).map(move |r| (c, r))), 200);
    let r = raster(20, 10, px);
    let trees = detect_crowns(&r, &CrownParams::default());
    assert_eq!(trees.len(), 2);
    assert_eq!(oracle_components(&r), vec![10, 10]);
    assert_eq!(trees[0].size_class, SizeClass::Medium);
    assert_eq!(trees[1].size_class, SizeClass::Large);
    assert!((trees[0].crown_radius - (10.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
}

#[test]
fn empty_and_noise() {
    assert!(detect_crowns(&raster(8, 8, vec![0; 64]), &CrownParams::default()).is_empty());
    let mut px = vec![0u8; 64];
    paint(&mut px, 8, [(1, 1), (2, 2)], 50);
    let r = raster(8, 8, px);
    assert!(detect_crowns(&r, &CrownParams::default()).is_empty());
    assert_eq!(detect_crowns(&r, &CrownParams { min_pixels: 1, ..Default::default() }).len(), 1);
}

#[test]
fn symmetric_blob_centroid() {
    let mut px = vec![0u8; 15 * 15];
    for r in 0..15usize {
        for c in 0..15usize {
            let (dx, dy) = (c as f64 - 7.0, r as f64 - 7.0);
            if dx * dx + dy * dy <= 16.0 {
                px[r * 15 + c] = 40;
            }
        }
    }
    let t = detect_crowns(&raster(15, 15, px), &CrownParams::default());
    assert_eq!(t.len(), 1);
    assert!((t[0].position.x - 7.5).abs() < 1e-12 && (t[0].position.y - 7.5).abs() < 1e-12);
    assert_eq!(t[0].size_class, SizeClass::Small);
}

#[test]
fn pgm_round_trip() {
    let mut px = vec![0u8; 12];
    px[5] = 200;
    let r = raster(4, 3, px);
    let back = CrownRaster::from_pgm(&r.to_pgm(), r.addr.clone(), r.bounds).unwrap();
    assert_eq!(back, r);
    assert!(CrownRaster::from_pgm(b"P5\n2 2\n255\n", r.addr.clone(), r.bounds).is_err());
}

fn disc(w: usize, h: usize, cx: f64, cy: f64, rad: f64) -> Vec<u8> {
    let mut px = vec![0u8; w * h];
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = (c as f64 + 0.5 - cx, r as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= rad * rad {
                px[r * w + c] = 120;
            }
        }
    }
    px
}

#[test]
fn split_crown_merges_on_seam() {
    let whole = raster(20, 20, disc(20, 20, 10.0, 10.0, 4.0));
    let tiles = split_grid(&whole, &[10], &[]);
    let merged = detect_and_merge(&tiles, &CrownParams::default());
    assert_eq!(merged.len(), 1);
    let oracle = detect_crowns(&whole, &CrownParams::default());
    assert!((merged[0].position.x - 10.0).abs() < 0.5);
    assert_eq!(merged[0].pixel_count, oracle[0].pixel_count);
    assert!((merged[0].position.x - oracle[0].position.x).abs() < 1e-9);
}

#[test]
fn interior_crowns_pass_through() {
    let mut px = vec![0u8; 20 * 10];
    paint(&mut px, 20, (2..5).flat_map(|c| (2..5).map(move |r| (c, r))), 90);
    paint(&mut px, 20, (14..17).flat_map(|c| (3..6).map(move |r| (c, r))), 90);
    let whole = raster(20, 10, px);
    let tiles = split_grid(&whole, &[10], &[]);
    let per_tile: BTreeMap<_, _> = tiles.iter().map(|(a, r)| (a.clone(), detect_crowns(r, &CrownParams::default()))).collect();
    let merged = merge_cross_tile(&per_tile, &tiles, &CrownParams::default()).unwrap();
    let mut expected: Vec<TreeInstance> = per_tile.values().flatten().cloned().collect();
    expected.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let mut got = merged.clone();
    got.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    assert_eq!(got, expected);
}

#[test]
fn disjoint_runs_on_same_edge_stay_apart() {
    // Column 9 holds rows 1..3, column 10 holds rows 6..8: no 8-adjacency.
    let mut px = vec![0u8; 20 * 10];
    paint(&mut px, 20, (7..10).flat_map(|c| (1..3).map(move |r| (c, r))), 90);
    paint(&mut px, 20, (10..13).flat_map(|c| (6..8).map(move |r| (c, r))), 90);
    let whole = raster(20, 10, px);
    let tiles = split_grid(&whole, &[10], &[]);
    assert_eq!(detect_and_merge(&tiles, &CrownParams::default()).len(), 2);
}

#[test]
fn diagonal_contact_across_corner_merges() {
    let mut px = vec![0u8; 10 * 10];
    paint(&mut px, 10, [(3, 3), (4, 3), (4, 4), (5, 5), (6, 5), (6, 6)], 90);
    let whole = raster(10, 10, px);
    let tiles = split4(&whole, 5, 5);
    let merged = detect_and_merge(&tiles, &CrownParams::default());
    assert_eq!(merged.len(), 1);
    assert_eq!(merged[0].pixel_count, 6);
}

#[test]
fn inconsistent_tiling_rejected() {
    let whole = raster(10, 10, vec![1; 100]);
    let mut tiles = split4(&whole, 5, 5);
    let east = tiles.get_mut(&addr(1, 0)).unwrap();
    east.bounds = Rect::new(east.bounds.min.x + 1.0, east.bounds.min.y, east.bounds.max.x + 1.0, east.bounds.max.y);
    let per_tile = BTreeMap::new();
    assert!(matches!(merge_cross_tile(&per_tile, &tiles, &CrownParams::default()), Err(VegetationError::InconsistentTiling { .. })));
}

fn lc(code: u8) -> LandCoverRaster {
    LandCoverRaster::filled(4, Rect::new(0.0, 0.0, 20.0, 20.0), code)
}

fn one_tree(x: f64, y: f64, id: &str) -> TreeInstance {
    TreeInstance {
        source_id: id.to_string(),
        position: Point2D::new(x, y),
        elevation: None,
        size_class: SizeClass::Medium,
        crown_radius: 2.0,
        pixel_count: 12,
        model_key: None,
        species: None,
    }
}

#[test]
fn placement() {
    let hf = HeightField::constant(21, 21, Point2D::new(0.0, 0.0), 1.0, 7.0);
    let p = place_trees(&[one_tree(5.0, 5.0, "a")], &hf, &lc(GRASS), 1);
    assert_eq!(p.trees[0].elevation, Some(7.0));
    assert_eq!(p.dropped_on_water, 0);
    let p = place_trees(&[one_tree(5.0, 5.0, "a")], &hf, &lc(WATER), 1);
    assert!(p.trees.is_empty());
    assert_eq!(p.dropped_on_water, 1);
    let p = place_trees(&[one_tree(50.0, 5.0, "a")], &hf, &lc(GRASS), 1);
    assert_eq!(p.dropped_outside, 1);
}

#[test]
fn model_keys_deterministic() {
    let hf = HeightField::constant(21, 21, Point2D::new(0.0, 0.0), 1.0, 0.0);
    let trees: Vec<_> = (0..100).map(|i| one_tree((i % 19) as f64 + 0.5, (i / 19) as f64 + 0.5, &format!("t#{i}"))).collect();
    let a = place_trees(&trees, &hf, &lc(GRASS), 99);
    let b = place_trees(&trees, &hf, &lc(GRASS), 99);
    assert_eq!(a, b);
    let keys: std::collections::BTreeSet<_> = a.trees.iter().filter_map(|t| t.model_key.clone()).collect();
    assert!(keys.len() > 1);
    assert!(keys.iter().all(|k| k.starts_with("tree_medium_")));
}

#[test]
fn csv_export() {
    let mut t = one_tree(1.5, 2.25, "a");
    t.elevation = Some(3.0);
    t.model_key = Some("tree_medium_0".into());
    let text = write_tree_csv(&[t]).unwrap();
    assert_eq!(text, "x,y,z,size_class,crown_radius,model_key\n1.5,2.25,3.0,medium,2.0,tree_medium_0\n");
}

fn random_raster() -> impl Strategy<Value = CrownRaster> {
    (4usize..24, 4usize..24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(prop_oneof![3 => Just(0u8), 2 => 1u8..=255], w * h).prop_map(move |px| raster(w, h, px))
    })
}

proptest! {
    #[test]
    fn counts_match_oracle(r in random_raster(), min_pixels in 1usize..4) {
        let params = CrownParams { min_pixels, ..Default::default() };
        let expected = oracle_components(&r).into_iter().filter(|&n| n >= min_pixels).count();
        prop_assert_eq!(detect_crowns(&r, &params).len(), expected);
    }

    #[test]
    fn four_way_split_invariance(r in random_raster(), fx in 0.2f64..0.8, fy in 0.2f64..0.8) {
        let cx = ((r.width as f64 * fx) as usize).clamp(1, r.width - 1);
        let cy = ((r.height as f64 * fy) as usize).clamp(1, r.height - 1);
        let params = CrownParams::default();
        let whole = detect_crowns(&r, &params);
        let merged = detect_and_merge(&split4(&r, cx, cy), &params);
        prop_assert_eq!(merged.len(), whole.len());
        let (a, b) = (sorted_centroids(&whole), sorted_centroids(&merged));
        let (pw, _) = r.pixel_size();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p.0 - q.0).abs() <= pw / 2.0 && (p.1 - q.1).abs() <= pw / 2.0);
        }
    }
}

#[test]
fn slippy_rows_of_unequal_height_merge() {
    use crate::geom::{GeoPoint, LocalFrame};
    let frame = LocalFrame::new(GeoPoint::new(52.09, 5.12).unwrap());
    let north = TileAddress::new(16, 33700, 21560, "trees").unwrap();
    let south = TileAddress::new(16, 33700, 21561, "trees").unwrap();
    let (bn, bs) = (north.scene_bounds(&frame).unwrap(), south.scene_bounds(&frame).unwrap());
    assert!((bn.height() - bs.height()).abs() > 1e-3);
    let n = 64;
    let mut pn = vec![0u8; n * n];
    let mut ps = vec![0u8; n * n];
    paint(&mut pn, n, [(10, 62), (11, 62), (10, 63), (11, 63)], 120);
    paint(&mut ps, n, [(10, 0), (11, 0), (10, 1), (11, 1)], 120);
    let tiles: BTreeMap<TileAddress, CrownRaster> = [
        (north.clone(), CrownRaster::new(north.clone(), n, n, bn, pn).unwrap()),
        (south.clone(), CrownRaster::new(south.clone(), n, n, bs, ps).unwrap()),
    ]
    .into();
    let merged = detect_and_merge(&tiles, &CrownParams::default());
    assert_eq!(merged.len(), 1);
    assert_eq!(merged[0].pixel_count, 8);
    assert!((merged[0].position.y - bn.min.y).abs() < bn.height() / n as f64);
}
