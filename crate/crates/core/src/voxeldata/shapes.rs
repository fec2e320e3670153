//! Procedural shape classes built from unions of axis-aligned cuboids.
//!
//! Each class has nominal dimensions on a 16-voxel reference grid, scaled to
//! the requested resolution. Instances perturb three principal dimensions by
//! an offset in `{-1, 0, 1}^3` (in reference voxels), so a class supports at
//! most 27 distinct instances and the jitter stays below 25% of nominal.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::VoxelGrid;
use crate::error::{Error, Result};

pub const MIN_SHAPE_RESOLUTION: usize = 12;
pub const MAX_INSTANCES: usize = 27;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Box,
    Tube,
    Pyramid,
    LBracket,
    Table,
    Chair,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Box,
        ShapeKind::Tube,
        ShapeKind::Pyramid,
        ShapeKind::LBracket,
        ShapeKind::Table,
        ShapeKind::Chair,
    ];

    pub fn for_class(class_id: usize) -> Result<Self> {
        Self::ALL.get(class_id).copied().ok_or_else(|| {
            Error::Vocabulary(format!("class {class_id}: the generator provides {} classes", Self::ALL.len()))
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Tube => "tube",
            ShapeKind::Pyramid => "pyramid",
            ShapeKind::LBracket => "l_bracket",
            ShapeKind::Table => "table",
            ShapeKind::Chair => "chair",
        }
    }
}

/// Per-instance dimension offsets; instance 0 is the nominal shape.
fn instance_offset(class_id: usize, instance_id: usize, seed: u64) -> Result<[i64; 3]> {
    if instance_id >= MAX_INSTANCES {
        return Err(Error::Vocabulary(format!(
            "instance {instance_id}: the generator provides {MAX_INSTANCES} instances per class"
        )));
    }
    let mut offsets: Vec<[i64; 3]> = (-1..=1)
        .flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| [a, b, c])))
        .filter(|o| *o != [0, 0, 0])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    offsets.shuffle(&mut rng);
    Ok(if instance_id == 0 { [0, 0, 0] } else { offsets[instance_id - 1] })
}

struct Canvas {
    grid: VoxelGrid,
    unit: f64,
    center: i64,
}

impl Canvas {
    /// Reference-grid length scaled to this resolution, at least one voxel.
    fn len(&self, reference: f64) -> i64 {
        ((reference * self.unit).round() as i64).max(1)
    }

    /// Start of a span of length `s` centered on the grid.
    fn centered(&self, s: i64) -> i64 {
        self.center - s / 2
    }

    /// Start of the nominal span, so thin walls stay put under jitter.
    fn anchored(&self, nominal: f64) -> i64 {
        self.centered(self.len(nominal))
    }

    fn fill(&mut self, x: (i64, i64), y: (i64, i64), z: (i64, i64), value: bool) {
        let d = self.grid.resolution() as i64;
        for i in x.0.max(0)..x.1.min(d) {
            for j in y.0.max(0)..y.1.min(d) {
                for k in z.0.max(0)..z.1.min(d) {
                    self.grid.set(i as usize, j as usize, k as usize, value);
                }
            }
        }
    }
}

/// Deterministic shape for `(class, instance, resolution, seed)`.
pub fn generate_shape(class_id: usize, instance_id: usize, resolution: usize, seed: u64) -> Result<VoxelGrid> {
    let kind = ShapeKind::for_class(class_id)?;
    if resolution < MIN_SHAPE_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} too small to render class {} (minimum {MIN_SHAPE_RESOLUTION})",
            kind.name()
        )));
    }
    let [a, b, c] = instance_offset(class_id, instance_id, seed)?.map(|o| o as f64);
    let mut cv = Canvas {
        grid: VoxelGrid::empty(resolution)?,
        unit: resolution as f64 / 16.0,
        center: resolution as i64 / 2,
    };
    let t = cv.len(2.0);
    match kind {
        ShapeKind::Box => {
            let (sx, sy, sz) = (cv.len(8.0 + a), cv.len(6.0 + b), cv.len(7.0 + c));
            let (x0, y0, z0) = (cv.centered(sx), cv.centered(sy), cv.centered(sz));
            cv.fill((x0, x0 + sx), (y0, y0 + sy), (z0, z0 + sz), true);
        }
        ShapeKind::Tube => {
            let (sx, sy, h) = (cv.len(8.0 + a), cv.len(8.0 + b), cv.len(9.0 + c));
            let (x0, y0, z0) = (cv.centered(sx), cv.centered(sy), cv.centered(h));
            cv.fill((x0, x0 + sx), (y0, y0 + sy), (z0, z0 + h), true);
            // the bore keeps its nominal size so jitter only changes wall thickness
            let bore = cv.len(8.0) - 2 * t;
            let b0 = cv.centered(bore);
            cv.fill((b0, b0 + bore), (b0, b0 + bore), (z0, z0 + h), false);
        }
        ShapeKind::Pyramid => {
            let (bx, by, h) = (cv.len(10.0 + a), cv.len(10.0 + b), cv.len(6.0 + c));
            let z0 = cv.centered(h);
            for k in 0..h {
                let frac = 1.0 - k as f64 / h as f64;
                let sx = ((bx as f64 * frac).round() as i64).max(t);
                let sy = ((by as f64 * frac).round() as i64).max(t);
                let (x0, y0) = (cv.centered(sx), cv.centered(sy));
                cv.fill((x0, x0 + sx), (y0, y0 + sy), (z0 + k, z0 + k + 1), true);
            }
        }
        ShapeKind::LBracket => {
            let (l, w, h) = (cv.len(10.0 + a), cv.len(6.0 + b), cv.len(9.0 + c));
            let (x0, y0, z0) = (cv.anchored(10.0), cv.anchored(6.0), cv.anchored(9.0));
            cv.fill((x0, x0 + l), (y0, y0 + w), (z0, z0 + t), true);
            cv.fill((x0, x0 + t), (y0, y0 + w), (z0, z0 + h), true);
        }
        ShapeKind::Table => {
            // legs sit at nominal corners; jitter widens the top and lengthens legs downward
            let (l, w, h) = (cv.len(10.0 + a), cv.len(8.0 + b), cv.len(8.0 + c));
            let (ln, wn, hn) = (cv.len(10.0), cv.len(8.0), cv.len(8.0));
            let (x0, y0) = (cv.centered(ln), cv.centered(wn));
            let top = cv.centered(hn) + hn;
            cv.fill((x0, x0 + l), (y0, y0 + w), (top - t, top), true);
            for (lx, ly) in [(x0, y0), (x0 + ln - t, y0), (x0, y0 + wn - t), (x0 + ln - t, y0 + wn - t)] {
                cv.fill((lx, lx + t), (ly, ly + t), (top - h, top), true);
            }
        }
        ShapeKind::Chair => {
            // seat height and leg corners are nominal; jitter widens the seat and raises the back
            let (l, w, h) = (cv.len(8.0 + a), cv.len(8.0 + b), cv.len(12.0 + c));
            let (ln, wn, hn) = (cv.len(8.0), cv.len(8.0), cv.len(12.0));
            let leg = cv.len(5.0);
            let (x0, y0, z0) = (cv.centered(ln), cv.centered(wn), cv.centered(hn));
            cv.fill((x0, x0 + l), (y0, y0 + w), (z0 + leg, z0 + leg + t), true);
            cv.fill((x0, x0 + t), (y0, y0 + w), (z0 + leg, z0 + h), true);
            for (lx, ly) in [(x0, y0), (x0 + ln - t, y0), (x0, y0 + wn - t), (x0 + ln - t, y0 + wn - t)] {
                cv.fill((lx, lx + t), (ly, ly + t), (z0, z0 + leg), true);
            }
        }
    }
    Ok(cv.grid)
}
