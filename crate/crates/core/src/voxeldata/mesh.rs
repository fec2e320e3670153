//! Triangle-mesh ingestion: OFF parsing and surface voxelization with
//! interior flood fill.

use std::collections::VecDeque;

use super::grid::{VoxelGrid, NEIGHBORS_6};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Axis-aligned cube `[lo, hi]^3` as 12 outward-wound triangles.
    pub fn cube(lo: f64, hi: f64) -> Mesh {
        let vertices = (0..8)
            .map(|i| [i & 1, (i >> 1) & 1, (i >> 2) & 1].map(|b| if b == 1 { hi } else { lo }))
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Mesh { vertices, triangles }
    }
}

/// Parses the plain-text OFF format. Polygons are fan-triangulated. The
/// header may carry the counts on the same line (`OFF8 6 0`).
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |msg: String| Error::Format { offset: 0, detail: msg };

    let header = tokens.next().ok_or_else(|| bad("empty OFF file".into()))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| bad(format!("expected OFF header, found {header:?}")))?;
    let mut counts: Vec<usize> = Vec::new();
    if !rest.is_empty() {
        counts.push(rest.parse().map_err(|_| bad(format!("bad vertex count {rest:?}")))?);
    }
    while counts.len() < 3 {
        let t = tokens.next().ok_or_else(|| bad("truncated OFF header".into()))?;
        counts.push(t.parse().map_err(|_| bad(format!("bad count {t:?}")))?);
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut next_f64 = |what: &str| -> Result<f64> {
        let t = tokens.next().ok_or_else(|| bad(format!("truncated while reading {what}")))?;
        t.parse::<f64>().map_err(|_| bad(format!("bad number {t:?} in {what}")))
    };
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let v = [next_f64("vertex")?, next_f64("vertex")?, next_f64("vertex")?];
        if v.iter().any(|c| !c.is_finite()) {
            return Err(bad(format!("vertex {i} is not finite")));
        }
        vertices.push(v);
    }
    let mut triangles = Vec::new();
    for f in 0..nf {
        let n = next_f64("face")? as usize;
        let idx: Vec<usize> = (0..n).map(|_| next_f64("face").map(|v| v as usize)).collect::<Result<_>>()?;
        if idx.iter().any(|&i| i >= nv) {
            return Err(bad(format!("face {f} references a missing vertex")));
        }
        for k in 1..n.saturating_sub(1) {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    Ok(Mesh { vertices, triangles })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Separating-axis test between a triangle and an axis-aligned box given by
/// center and half extents. Touching counts as overlap.
pub fn triangle_box_overlap(center: [f64; 3], half: [f64; 3], tri: [[f64; 3]; 3]) -> bool {
    const TOL: f64 = 1e-9;
    let v = tri.map(|p| sub(p, center));
    let edges = [sub(v[1], v[0]), sub(v[2], v[1]), sub(v[0], v[2])];
    let separated = |axis: [f64; 3]| {
        let r = half[0] * axis[0].abs() + half[1] * axis[1].abs() + half[2] * axis[2].abs();
        let p = v.map(|q| dot(q, axis));
        let (lo, hi) = (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]));
        lo > r + TOL || hi < -r - TOL
    };
    let units = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for e in edges {
        for u in units {
            if separated(cross(u, e)) {
                return false;
            }
        }
    }
    for u in units {
        if separated(u) {
            return false;
        }
    }
    !separated(cross(edges[0], edges[1]))
}

/// Scales the mesh uniformly so its largest bounding-box side spans the grid,
/// centers it, marks every voxel a triangle touches, then fills enclosed space.
pub fn mesh_voxelize(mesh: &Mesh, resolution: usize) -> Result<VoxelGrid> {
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidArgument("mesh has no triangles".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for t in &mesh.triangles {
        for &i in t {
            for a in 0..3 {
                lo[a] = lo[a].min(mesh.vertices[i][a]);
                hi[a] = hi[a].max(mesh.vertices[i][a]);
            }
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidArgument("mesh has zero or non-finite extent".into()));
    }
    let d = resolution as f64;
    let scale = d / extent;
    let map = |p: [f64; 3]| [0, 1, 2].map(|a| (p[a] - (lo[a] + hi[a]) / 2.0) * scale + d / 2.0);

    let mut grid = VoxelGrid::empty(resolution)?;
    let n = resolution as isize;
    for t in &mesh.triangles {
        let tri = t.map(|i| map(mesh.vertices[i]));
        let range = |a: usize| {
            let mn = tri.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let mx = tri.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            ((mn.floor() as isize - 1).max(0), (mx.floor() as isize + 1).min(n - 1))
        };
        let (rx, ry, rz) = (range(0), range(1), range(2));
        for x in rx.0..=rx.1 {
            for y in ry.0..=ry.1 {
                for z in rz.0..=rz.1 {
                    let c = [x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5];
                    if triangle_box_overlap(c, [0.5; 3], tri) {
                        grid.set(x as usize, y as usize, z as usize, true);
                    }
                }
            }
        }
    }
    fill_interior(&mut grid);
    Ok(grid)
}

/// Marks every empty voxel not 6-connected to the outside as occupied.
fn fill_interior(grid: &mut VoxelGrid) {
    let d = grid.resolution() as isize;
    let p = d + 2;
    let idx = |x: isize, y: isize, z: isize| ((x * p + y) * p + z) as usize;
    let mut outside = vec![false; (p * p * p) as usize];
    let mut queue = VecDeque::from([(0isize, 0isize, 0isize)]);
    outside[0] = true;
    while let Some((x, y, z)) = queue.pop_front() {
        for (dx, dy, dz) in NEIGHBORS_6 {
            let (nx, ny, nz) = (x + dx, y + dy, z + dz);
            if nx < 0 || ny < 0 || nz < 0 || nx >= p || ny >= p || nz >= p {
                continue;
            }
            let i = idx(nx, ny, nz);
            if outside[i] || grid.get_signed(nx - 1, ny - 1, nz - 1) {
                continue;
            }
            outside[i] = true;
            queue.push_back((nx, ny, nz));
        }
    }
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                if !outside[idx(x + 1, y + 1, z + 1)] {
                    grid.set(x as usize, y as usize, z as usize, true);
                }
            }
        }
    }
}
