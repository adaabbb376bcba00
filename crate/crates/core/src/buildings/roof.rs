use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::BuildingMesh;
use crate::geom::{point_in_triangle, Point2D, Rect};

pub const FALLBACK_ROOF_COLOR: [u8; 3] = [128, 128, 128];
/// Fewer covered pixels than this yields the fallback color.
pub const MIN_ROOF_PIXELS: usize = 4;

/// Georeferenced RGB image. Row 0 is the northern row, as in image files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorRaster {
    pub width: usize,
    pub height: usize,
    pub bounds: Rect,
    pub pixels: Vec<[u8; 3]>,
}

impl ColorRaster {
    pub fn filled(width: usize, height: usize, bounds: Rect, rgb: [u8; 3]) -> Self {
        ColorRaster { width, height, bounds, pixels: vec![rgb; width * height] }
    }

    /// Decodes a binary PPM covering `bounds`.
    pub fn from_ppm(bytes: &[u8], bounds: Rect) -> Result<Self, image::ImageError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)?.into_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Ok(ColorRaster { width: w as usize, height: h as usize, bounds, pixels })
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().flatten());
        out
    }

    /// Joins rasters with equal pixel size on a common lattice into one
    /// covering their union; uncovered pixels are black.
    pub fn mosaic(tiles: &[ColorRaster]) -> Option<ColorRaster> {
        let first = tiles.first()?;
        let (pw, ph) = first.pixel_size();
        let bounds = tiles.iter().map(|t| t.bounds).reduce(|a, b| a.union(&b))?;
        let width = (bounds.width() / pw).round() as usize;
        let height = (bounds.height() / ph).round() as usize;
        let mut out = ColorRaster::filled(width, height, bounds, [0; 3]);
        for t in tiles {
            let c0 = ((t.bounds.min.x - bounds.min.x) / pw).round() as usize;
            let r0 = ((bounds.max.y - t.bounds.max.y) / ph).round() as usize;
            for row in 0..t.height.min(height.saturating_sub(r0)) {
                for col in 0..t.width.min(width.saturating_sub(c0)) {
                    out.set(c0 + col, r0 + row, t.get(col, row));
                }
            }
        }
        Some(out)
    }

    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, rgb: [u8; 3]) {
        self.pixels[row * self.width + col] = rgb;
    }

    pub fn pixel_size(&self) -> (f64, f64) {
        (self.bounds.width() / self.width as f64, self.bounds.height() / self.height as f64)
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> Point2D {
        let (pw, ph) = self.pixel_size();
        Point2D::new(self.bounds.min.x + (col as f64 + 0.5) * pw, self.bounds.max.y - (row as f64 + 0.5) * ph)
    }
}

/// Indices of pixels whose centers fall inside the plan view of the roof
/// faces.
pub fn roof_pixels(mesh: &BuildingMesh, aerial: &ColorRaster) -> BTreeSet<usize> {
    let mut hits = BTreeSet::new();
    let (pw, ph) = aerial.pixel_size();
    for &t in &mesh.roof_faces {
        let [a, b, c] = mesh.triangle_points(t).map(|p| Point2D::new(p[0], p[1]));
        let Some(bb) = Rect::from_points([a, b, c]) else { continue };
        let Some(bb) = bb.expand(pw.max(ph)).intersection(&aerial.bounds) else { continue };
        let c0 = ((bb.min.x - aerial.bounds.min.x) / pw).floor().max(0.0) as usize;
        let c1 = (((bb.max.x - aerial.bounds.min.x) / pw).ceil() as usize).min(aerial.width);
        let r0 = ((aerial.bounds.max.y - bb.max.y) / ph).floor().max(0.0) as usize;
        let r1 = (((aerial.bounds.max.y - bb.min.y) / ph).ceil() as usize).min(aerial.height);
        for row in r0..r1 {
            for col in c0..c1 {
                if point_in_triangle(aerial.pixel_center(col, row), a, b, c) {
                    hits.insert(row * aerial.width + col);
                }
            }
        }
    }
    hits
}

/// Component-wise lower median of the roof pixels, or the fallback gray
/// when fewer than [`MIN_ROOF_PIXELS`] are covered.
pub fn assign_roof_color(mesh: &BuildingMesh, aerial: &ColorRaster) -> BuildingMesh {
    let hits = roof_pixels(mesh, aerial);
    let mut out = mesh.clone();
    if hits.len() < MIN_ROOF_PIXELS {
        out.roof_color = FALLBACK_ROOF_COLOR;
        out.roof_pixel_count = 0;
        return out;
    }
    let mut color = [0u8; 3];
    for (k, slot) in color.iter_mut().enumerate() {
        let mut channel: Vec<u8> = hits.iter().map(|&i| aerial.pixels[i][k]).collect();
        channel.sort_unstable();
        *slot = channel[(channel.len() - 1) / 2];
    }
    out.roof_color = color;
    out.roof_pixel_count = hits.len();
    out
}
