//! Persistence: run configuration text, binary checkpoints and grids, and
//! metrics CSV. All binary formats are little-endian.

mod binary;
mod checkpoint;
mod config;
mod dataset;
mod export;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{EvalConfig, RunConfig};
pub use dataset::{grid_from_bytes, grid_to_bytes, load_dataset, save_dataset, FLAG_NOISY, FLAG_VIEW, GRID_MAGIC};
pub use export::{
    em_csv, export_em, export_metrics, fmt_f64, history_csv, load_json, metrics_csv, save_json, weights_csv,
};
