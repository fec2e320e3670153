//! Perspective single-view rendering: each pixel ray keeps only the first
//! occupied voxel it enters.

use super::grid::VoxelGrid;
use crate::error::{Error, Result};

pub const DEFAULT_ELEVATION_DEG: f64 = 30.0;
/// Camera distance from the grid center, in grid half-widths.
pub const DEFAULT_DISTANCE_FACTOR: f64 = 2.5;
const PIXELS_PER_VOXEL: usize = 4;

/// Pinhole camera on a horizontal circle around the grid, looking at its center.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub origin: [f64; 3],
    forward: [f64; 3],
    right: [f64; 3],
    up: [f64; 3],
    tan_half_fov: f64,
    pub pixels: usize,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Camera {
    /// Camera for azimuth bin `viewpoint_id` of `viewpoints`, at `distance_factor`
    /// grid half-widths from the center and `elevation_deg` above the horizon.
    pub fn new(
        resolution: usize,
        viewpoint_id: usize,
        viewpoints: usize,
        distance_factor: f64,
        elevation_deg: f64,
    ) -> Result<Self> {
        if viewpoints == 0 || viewpoint_id >= viewpoints {
            return Err(Error::Vocabulary(format!("viewpoint {viewpoint_id} not in [0, {viewpoints})")));
        }
        let d = resolution as f64;
        let half = d / 2.0;
        let dist = distance_factor * half;
        let radius = 3f64.sqrt() * half;
        if !(dist > radius) {
            return Err(Error::InvalidArgument(format!(
                "camera distance factor {distance_factor} places the camera inside the grid"
            )));
        }
        let az = 2.0 * std::f64::consts::PI * viewpoint_id as f64 / viewpoints as f64;
        let el = elevation_deg.to_radians();
        let center = [half, half, half];
        let origin = [
            half + dist * el.cos() * az.cos(),
            half + dist * el.cos() * az.sin(),
            half + dist * el.sin(),
        ];
        let forward = normalize(sub(center, origin));
        let right = normalize(cross(forward, [0.0, 0.0, 1.0]));
        let up = cross(right, forward);
        let sin_half = radius / dist;
        Ok(Camera {
            origin,
            forward,
            right,
            up,
            tan_half_fov: sin_half / (1.0 - sin_half * sin_half).sqrt(),
            pixels: PIXELS_PER_VOXEL * resolution,
        })
    }

    /// Unnormalized ray direction through the center of pixel `(u, v)`.
    pub fn ray(&self, u: usize, v: usize) -> [f64; 3] {
        let p = self.pixels as f64;
        let su = ((u as f64 + 0.5) / p * 2.0 - 1.0) * self.tan_half_fov;
        let sv = ((v as f64 + 0.5) / p * 2.0 - 1.0) * self.tan_half_fov;
        [0, 1, 2].map(|a| self.forward[a] + su * self.right[a] + sv * self.up[a])
    }

    pub fn rays(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.pixels).flat_map(move |v| (0..self.pixels).map(move |u| self.ray(u, v)))
    }
}

/// First occupied voxel along `origin + t * dir`, t >= 0, by 3D DDA traversal.
pub fn first_hit(grid: &VoxelGrid, origin: [f64; 3], dir: [f64; 3]) -> Option<[usize; 3]> {
    let d = grid.resolution() as f64;
    let (mut t_enter, mut t_exit) = (0.0f64, f64::INFINITY);
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < 0.0 || origin[a] > d {
                return None;
            }
        } else {
            let ta = (0.0 - origin[a]) / dir[a];
            let tb = (d - origin[a]) / dir[a];
            t_enter = t_enter.max(ta.min(tb));
            t_exit = t_exit.min(ta.max(tb));
        }
    }
    if t_enter > t_exit {
        return None;
    }
    let n = grid.resolution() as isize;
    let mut cell = [0isize; 3];
    let mut step = [0isize; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let p = origin[a] + t_enter * dir[a];
        cell[a] = (p.floor() as isize).clamp(0, n - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            t_max[a] = (cell[a] as f64 + 1.0 - origin[a]) / dir[a];
            t_delta[a] = 1.0 / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_max[a] = (cell[a] as f64 - origin[a]) / dir[a];
            t_delta[a] = -1.0 / dir[a];
        }
    }
    loop {
        if grid.get(cell[0] as usize, cell[1] as usize, cell[2] as usize) {
            return Some(cell.map(|c| c as usize));
        }
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] > t_exit {
            return None;
        }
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= n {
            return None;
        }
        t_max[axis] += t_delta[axis];
    }
}

/// Visible-surface voxels of `full` seen from `camera`.
pub fn render_with_camera(full: &VoxelGrid, camera: &Camera) -> Result<VoxelGrid> {
    if full.is_empty() {
        return Err(Error::InvalidArgument("cannot render an empty grid".into()));
    }
    let mut view = VoxelGrid::empty(full.resolution())?;
    for dir in camera.rays() {
        if let Some([x, y, z]) = first_hit(full, camera.origin, dir) {
            view.set(x, y, z, true);
        }
    }
    Ok(view)
}

/// Single view from azimuth bin `viewpoint_id` of `viewpoints` at the default
/// 30° elevation; `camera_distance` is in grid half-widths.
pub fn render_single_view(
    full: &VoxelGrid,
    viewpoint_id: usize,
    viewpoints: usize,
    camera_distance: f64,
) -> Result<VoxelGrid> {
    let camera = Camera::new(full.resolution(), viewpoint_id, viewpoints, camera_distance, DEFAULT_ELEVATION_DEG)?;
    render_with_camera(full, &camera)
}
