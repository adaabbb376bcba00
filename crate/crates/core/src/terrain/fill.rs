use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HeightField, TerrainError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillParams {
    /// Search radius limit in meters.
    pub max_radius: f64,
    /// The search ring stops expanding once this many samples are found.
    pub min_samples: usize,
    /// Inverse-distance weighting exponent.
    pub power: f64,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams { max_radius: 50.0, min_samples: 4, power: 2.0 }
    }
}

impl FillParams {
    pub fn with_radius(max_radius: f64) -> Self {
        FillParams { max_radius, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FillReport {
    pub filled: usize,
    /// Nodata cells with no measured cell within the search radius.
    pub unfilled: usize,
}

/// Fills nodata cells by inverse-distance weighting of measured cells found in
/// a circular search that grows one cell size per ring.
///
/// Only measured cells serve as sources, so previously filled cells never feed
/// a fill and a second pass is a no-op.
pub fn fill_gaps(hf: &HeightField, max_radius: f64) -> Result<(HeightField, FillReport), TerrainError> {
    fill_gaps_with(hf, &FillParams::with_radius(max_radius))
}

pub fn fill_gaps_with(hf: &HeightField, params: &FillParams) -> Result<(HeightField, FillReport), TerrainError> {
    let is_source = |i: usize| !hf.interpolated[i] && !hf.is_nodata_value(hf.values[i]);
    if !(0..hf.values.len()).any(is_source) {
        return Err(TerrainError::AllNoData);
    }
    let cs = hf.cell_size;
    let reach = (params.max_radius / cs).floor() as i64;
    let mut offsets: Vec<(f64, i64, i64)> = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if dr == 0 && dc == 0 {
                continue;
            }
            let d = cs * ((dr * dr + dc * dc) as f64).sqrt();
            if d <= params.max_radius {
                offsets.push((d, dr, dc));
            }
        }
    }
    offsets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let (ncols, nrows) = (hf.ncols as i64, hf.nrows as i64);
    let results: Vec<Option<f64>> = (0..hf.values.len())
        .into_par_iter()
        .map(|i| {
            if !hf.is_nodata_value(hf.values[i]) {
                return None;
            }
            let (col, row) = ((i as i64) % ncols, (i as i64) / ncols);
            let mut ring_radius = cs.min(params.max_radius);
            let mut count = 0usize;
            let mut wsum = 0.0;
            // Weighted mean of differences from the first sample, so a
            // constant neighborhood reproduces its value exactly.
            let mut anchor = None;
            let mut acc = 0.0;
            for &(d, dr, dc) in &offsets {
                if d > ring_radius {
                    if count >= params.min_samples {
                        break;
                    }
                    while d > ring_radius {
                        ring_radius = (ring_radius + cs).min(params.max_radius);
                    }
                }
                let (c, r) = (col + dc, row + dr);
                if c < 0 || r < 0 || c >= ncols || r >= nrows {
                    continue;
                }
                let j = (r * ncols + c) as usize;
                if is_source(j) {
                    let w = d.powf(-params.power);
                    let z0 = *anchor.get_or_insert(hf.values[j]);
                    acc += w * (hf.values[j] - z0);
                    wsum += w;
                    count += 1;
                }
            }
            anchor.map(|z0| z0 + acc / wsum)
        })
        .collect();

    let mut out = hf.clone();
    let mut report = FillReport::default();
    for (i, r) in results.into_iter().enumerate() {
        if !hf.is_nodata_value(hf.values[i]) {
            continue;
        }
        match r {
            Some(z) => {
                out.values[i] = z;
                out.interpolated[i] = true;
                report.filled += 1;
            }
            None => {
                out.values[i] = hf.nodata;
                report.unfilled += 1;
            }
        }
    }
    Ok((out, report))
}
