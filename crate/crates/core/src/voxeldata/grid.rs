use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

pub const MIN_RESOLUTION: usize = 4;

/// Binary occupancy cube of side `resolution`, indexed `(x, y, z)` row-major
/// with `z` fastest. `z` is the up axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    resolution: usize,
    cells: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }
        Ok(VoxelGrid {
            resolution,
            cells: vec![0; resolution * resolution * resolution],
        })
    }

    /// Builds a grid from 0/1 cells.
    pub fn from_cells(resolution: usize, cells: Vec<u8>) -> Result<Self> {
        let mut grid = Self::empty(resolution)?;
        if cells.len() != grid.cells.len() {
            return Err(Error::shape(
                "voxel grid",
                format!("{} cells for resolution {resolution}", cells.len()),
            ));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::InvalidArgument("occupancy values must be 0 or 1".into()));
        }
        grid.cells = cells;
        Ok(grid)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.resolution + y) * self.resolution + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.cells[self.index(x, y, z)] == 1
    }

    /// Occupancy at signed coordinates; out of bounds reads as empty.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize, z: isize) -> bool {
        let d = self.resolution as isize;
        if x < 0 || y < 0 || z < 0 || x >= d || y >= d || z >= d {
            return false;
        }
        self.get(x as usize, y as usize, z as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, occupied: bool) {
        let i = self.index(x, y, z);
        self.cells[i] = occupied as u8;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|&c| c == 0)
    }

    pub fn occupied(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let d = self.resolution;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 1)
            .map(move |(i, _)| [i / (d * d), (i / d) % d, i % d])
    }

    pub fn is_subset_of(&self, other: &VoxelGrid) -> bool {
        self.resolution == other.resolution && self.cells.iter().zip(&other.cells).all(|(&a, &b)| a <= b)
    }

    /// Intersection over union; two empty grids count as identical (1.0).
    pub fn iou(&self, other: &VoxelGrid) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.cells.iter().zip(&other.cells) {
            inter += (a & b) as usize;
            union += (a | b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// `[1, D, D, D]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let d = self.resolution;
        Tensor::new(vec![1, d, d, d], self.cells.iter().map(|&c| c as f64).collect())
            .expect("resolution checked at construction")
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| c as f64).collect()
    }

    /// Number of 6-connected components of the occupied set.
    pub fn components(&self) -> usize {
        let d = self.resolution as isize;
        let mut seen = vec![false; self.cells.len()];
        let mut count = 0;
        for start in 0..self.cells.len() {
            if self.cells[start] == 0 || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                let (x, y, z) = ((i as isize) / (d * d), (i as isize / d) % d, i as isize % d);
                for (dx, dy, dz) in NEIGHBORS_6 {
                    let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                    if self.get_signed(nx, ny, nz) {
                        let j = self.index(nx as usize, ny as usize, nz as usize);
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

pub(crate) const NEIGHBORS_6: [(isize, isize, isize); 6] =
    [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];

/// Generative factors of one sample: class, instance (nested in class),
/// viewpoint bin and translation label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelTuple {
    pub class_id: usize,
    pub instance_id: usize,
    pub viewpoint_id: usize,
    pub translation_id: usize,
}

/// Vocabulary sizes `(C, I, V, |T|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocab {
    pub classes: usize,
    pub instances: usize,
    pub viewpoints: usize,
    pub translations: usize,
}

impl Vocab {
    pub fn check(&self, label: &LabelTuple) -> Result<()> {
        let fields = [
            ("class", label.class_id, self.classes),
            ("instance", label.instance_id, self.instances),
            ("viewpoint", label.viewpoint_id, self.viewpoints),
            ("translation", label.translation_id, self.translations),
        ];
        for (what, v, n) in fields {
            if v >= n {
                return Err(Error::Vocabulary(format!("{what} {v} not in [0, {n})")));
            }
        }
        Ok(())
    }
}

/// All integer offsets with every component in `[-max_shift, max_shift]`,
/// ordered lexicographically by `(dx, dy, dz)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationTable {
    max_shift: i32,
    offsets: Vec<[i32; 3]>,
}

impl TranslationTable {
    pub fn new(max_shift: i32) -> Self {
        let r = -max_shift..=max_shift;
        let offsets = r
            .clone()
            .flat_map(|dx| r.clone().flat_map(move |dy| (-max_shift..=max_shift).map(move |dz| [dx, dy, dz])))
            .collect();
        TranslationTable { max_shift, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn max_shift(&self) -> i32 {
        self.max_shift
    }

    pub fn offset(&self, id: usize) -> Option<[i32; 3]> {
        self.offsets.get(id).copied()
    }

    pub fn id_of(&self, offset: [i32; 3]) -> Option<usize> {
        self.offsets.iter().position(|&o| o == offset)
    }

    pub fn identity(&self) -> usize {
        self.id_of([0, 0, 0]).expect("zero offset is always present")
    }
}
