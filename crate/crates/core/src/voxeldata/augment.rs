use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::VoxelGrid;
use crate::error::{Error, Result};

pub const MAX_FLIP_RATE: f64 = 0.1;

/// Shifts occupancy by `offset`; voxels leaving the grid are dropped.
pub fn translate(grid: &VoxelGrid, offset: [i32; 3]) -> VoxelGrid {
    let d = grid.resolution() as isize;
    let mut out = VoxelGrid::empty(grid.resolution()).expect("same resolution");
    for [x, y, z] in grid.occupied() {
        let (nx, ny, nz) = (
            x as isize + offset[0] as isize,
            y as isize + offset[1] as isize,
            z as isize + offset[2] as isize,
        );
        if (0..d).contains(&nx) && (0..d).contains(&ny) && (0..d).contains(&nz) {
            out.set(nx as usize, ny as usize, nz as usize, true);
        }
    }
    out
}

/// Flips each voxel independently with probability `flip_rate`.
pub fn add_noise(grid: &VoxelGrid, flip_rate: f64, seed: u64) -> Result<VoxelGrid> {
    if !(0.0..=MAX_FLIP_RATE).contains(&flip_rate) {
        return Err(Error::InvalidArgument(format!(
            "flip rate {flip_rate} outside [0, {MAX_FLIP_RATE}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = grid
        .cells()
        .iter()
        .map(|&c| if rng.random::<f64>() < flip_rate { 1 - c } else { c })
        .collect();
    VoxelGrid::from_cells(grid.resolution(), cells)
}
