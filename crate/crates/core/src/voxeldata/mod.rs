//! Synthetic labeled voxel shapes, single-view rendering and augmentation.

mod augment;
mod dataset;
mod grid;
mod mesh;
mod render;
mod shapes;

pub use augment::{add_noise, translate, MAX_FLIP_RATE};
pub use dataset::{build_dataset, DataConfig, Dataset, Sample, Split, SplitMode};
pub use grid::{LabelTuple, TranslationTable, Vocab, VoxelGrid, MIN_RESOLUTION};
pub use mesh::{mesh_voxelize, parse_off, triangle_box_overlap, Mesh};
pub use render::{
    first_hit, render_single_view, render_with_camera, Camera, DEFAULT_DISTANCE_FACTOR, DEFAULT_ELEVATION_DEG,
};
pub use shapes::{generate_shape, ShapeKind, MAX_INSTANCES, MIN_SHAPE_RESOLUTION};
