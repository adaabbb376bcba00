use serde::{Deserialize, Serialize};

use super::{BuildingError, BuildingMesh};

/// Faces tilted less than this from horizontal count as horizontal.
pub const ROOF_MAX_TILT_DEG: f64 = 15.0;

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Texture frame of one planar face group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacadeFrame {
    pub normal: V3,
    pub horizontal: V3,
    pub vertical: V3,
    /// Extent of the face along the two axes, meters.
    pub extent: [f64; 2],
    pub is_roof: bool,
}

impl FacadeFrame {
    /// Horizontal faces use the world x and y axes; others the in-plane
    /// horizontal direction and world-up projected into the plane.
    pub fn for_normal(normal: V3) -> FacadeFrame {
        let up = [0.0, 0.0, 1.0];
        let horizontal_face = normal[2].abs() > ROOF_MAX_TILT_DEG.to_radians().cos();
        let (horizontal, vertical) = if horizontal_face {
            ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        } else {
            let h = cross(up, normal);
            let h = scale(h, 1.0 / norm(h));
            (h, cross(normal, h))
        };
        FacadeFrame { normal, horizontal, vertical, extent: [0.0, 0.0], is_roof: horizontal_face && normal[2] > 0.0 }
    }
}

struct FaceGroup {
    normal: V3,
    offset: f64,
    triangles: Vec<usize>,
}

fn face_groups(mesh: &BuildingMesh) -> Result<Vec<FaceGroup>, BuildingError> {
    let mut groups: Vec<FaceGroup> = Vec::new();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle_points(t);
        let n = cross(sub(b, a), sub(c, a));
        let len = norm(n);
        if len < 1e-12 {
            return Err(BuildingError::DegenerateFace { triangle: t });
        }
        let n = scale(n, 1.0 / len);
        let d = dot(n, a);
        match groups.iter_mut().find(|g| dot(g.normal, n) > 1.0 - 1e-9 && (g.offset - d).abs() < 1e-6) {
            Some(g) => g.triangles.push(t),
            None => groups.push(FaceGroup { normal: n, offset: d, triangles: vec![t] }),
        }
    }
    Ok(groups)
}

/// Frames of the mesh's planar face groups with their extents, each paired
/// with the triangles it covers.
pub fn facade_frames(mesh: &BuildingMesh) -> Result<Vec<(FacadeFrame, Vec<usize>)>, BuildingError> {
    face_groups(mesh)?
        .into_iter()
        .map(|g| {
            let mut frame = FacadeFrame::for_normal(g.normal);
            let pts = g.triangles.iter().flat_map(|&t| mesh.triangle_points(t));
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in pts {
                let uv = [dot(p, frame.horizontal), dot(p, frame.vertical)];
                for k in 0..2 {
                    lo[k] = lo[k].min(uv[k]);
                    hi[k] = hi[k].max(uv[k]);
                }
            }
            frame.extent = [hi[0] - lo[0], hi[1] - lo[1]];
            Ok((frame, g.triangles))
        })
        .collect()
}

/// Assigns per-face planar UVs. Coplanar triangles share one frame; each
/// face group gets its own copy of its vertices so that UVs never conflict
/// across faces. UVs are measured from the group's minimum corner and scaled
/// by `texel_density`. Upward horizontal faces are recorded as roof faces.
pub fn compute_uv(mesh: &BuildingMesh, texel_density: f64) -> Result<BuildingMesh, BuildingError> {
    let mut out = mesh.clone();
    out.vertices.clear();
    out.uvs.clear();
    out.roof_faces.clear();
    for (frame, triangles) in facade_frames(mesh)? {
        let mut remap = std::collections::BTreeMap::new();
        let start = out.vertices.len();
        for &t in &triangles {
            let mapped = mesh.triangles[t].map(|i| {
                *remap.entry(i).or_insert_with(|| {
                    out.vertices.push(mesh.vertices[i as usize]);
                    (out.vertices.len() - 1) as u32
                })
            });
            out.triangles[t] = mapped;
            if frame.is_roof {
                out.roof_faces.push(t);
            }
        }
        let coords: Vec<[f64; 2]> = out.vertices[start..].iter().map(|&p| [dot(p, frame.horizontal), dot(p, frame.vertical)]).collect();
        let min_u = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
        let min_v = coords.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
        out.uvs.extend(coords.iter().map(|c| [(c[0] - min_u) * texel_density, (c[1] - min_v) * texel_density]));
    }
    out.roof_faces.sort_unstable();
    Ok(out)
}
