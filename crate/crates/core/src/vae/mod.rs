//! Factorized variational auto-encoder: a single-view encoder with one
//! diagonal Gaussian per latent block (class, instance, viewpoint,
//! translation), a Bernoulli voxel decoder, and label-conditional prior
//! networks with identity covariance.

mod config;
pub mod fixtures;
mod loss;
mod model;
mod train;

pub use config::{Architecture, Block, TrainConfig};
pub use loss::{kl_block, kl_term, prior_reg_lrg, recon_loss_lrc};
pub use model::{reparameterize, LossReport, ModelCheckpoint, PosteriorBlocks, PredictedShape, PriorBlocks};
pub use train::{composite_loss, loss_and_gradient, train, train_step, train_with};
