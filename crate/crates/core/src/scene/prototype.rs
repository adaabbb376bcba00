use super::{MeshData, MeshMode};

pub const TREE_PROTOTYPE_KEY: &str = "tree";
const TRUNK_SIDES: u32 = 6;

/// Unit tree with crown radius 1: a hexagonal trunk under an octahedral
/// crown. Instances scale it by their crown radius.
pub fn tree_prototype() -> MeshData {
    let mut positions = Vec::new();
    let mut indices = Vec::new();
    let (trunk_r, trunk_h) = (0.12, 1.0);
    for k in 0..TRUNK_SIDES {
        let a = k as f64 * std::f64::consts::TAU / TRUNK_SIDES as f64;
        let (s, c) = a.sin_cos();
        positions.push([trunk_r * c, trunk_r * s, 0.0]);
        positions.push([trunk_r * c, trunk_r * s, trunk_h]);
    }
    for k in 0..TRUNK_SIDES {
        let (b0, t0) = (2 * k, 2 * k + 1);
        let (b1, t1) = (2 * ((k + 1) % TRUNK_SIDES), 2 * ((k + 1) % TRUNK_SIDES) + 1);
        indices.extend_from_slice(&[b0, b1, t1, b0, t1, t0]);
    }
    let base = positions.len() as u32;
    let center = trunk_h + 0.9;
    positions.extend_from_slice(&[
        [1.0, 0.0, center],
        [0.0, 1.0, center],
        [-1.0, 0.0, center],
        [0.0, -1.0, center],
        [0.0, 0.0, center + 1.1],
        [0.0, 0.0, trunk_h - 0.1],
    ]);
    let (top, bottom) = (base + 4, base + 5);
    for k in 0..4 {
        let (a, b) = (base + k, base + (k + 1) % 4);
        indices.extend_from_slice(&[a, b, top, b, a, bottom]);
    }
    MeshData { mode: MeshMode::Triangles, positions, indices, uvs: None, classes: None, color: [50, 110, 45] }
}
