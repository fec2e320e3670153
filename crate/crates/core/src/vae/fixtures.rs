//! Small deterministic models and samples for gradient checks and smoke tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::model::ModelCheckpoint;
use super::train::composite_loss;
use crate::error::Result;
use crate::gradcore::{grad_check, GradCheckReport, Mode};
use crate::voxeldata::{LabelTuple, Sample, Split, Vocab, VoxelGrid};

/// Resolution of the tiny fixture model.
pub const TINY_RESOLUTION: usize = 8;

/// Deterministic pseudo-random grid with roughly `fill` occupancy.
pub fn noise_grid(resolution: usize, fill: f64, seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = resolution.pow(3);
    let cells = (0..n).map(|_| u8::from(rng.random::<f64>() < fill)).collect();
    VoxelGrid::from_cells(resolution, cells).expect("cell count matches resolution")
}

/// `n` training samples with cycling labels and noise grids (full ~40%, view ~20%).
pub fn toy_samples(resolution: usize, n: usize, vocab: &Vocab) -> Vec<Sample> {
    (0..n)
        .map(|k| {
            let label = LabelTuple {
                class_id: k % vocab.classes,
                instance_id: k % vocab.instances,
                viewpoint_id: k % vocab.viewpoints,
                translation_id: k % vocab.translations,
            };
            Sample {
                label,
                full: noise_grid(resolution, 0.4, 100 + k as u64),
                view: noise_grid(resolution, 0.2, 200 + k as u64),
                noisy: false,
                split: Split::Train,
            }
        })
        .collect()
}

/// 8^3 with two conv layers and only the output dense layer.
pub fn tiny_config() -> (TrainConfig, Vocab) {
    let mut cfg = TrainConfig::default();
    cfg.arch.conv_channels = vec![2, 3];
    cfg.arch.dense_hidden = 0;
    cfg.arch.prior_hidden = 4;
    cfg.dims = [2, 2, 1, 1];
    cfg.seed = 5;
    let vocab = Vocab { classes: 2, instances: 2, viewpoints: 3, translations: 3 };
    (cfg, vocab)
}

/// The tiny fixture model with biases drawn from `U(-0.2, 0.2)`. Zero biases
/// put every unit with an all-empty receptive field exactly on the ELU kink,
/// where finite differences are only first-order accurate.
pub fn tiny_model(seed: u64) -> Result<ModelCheckpoint> {
    let (mut cfg, vocab) = tiny_config();
    cfg.seed = seed;
    let mut model = ModelCheckpoint::new(cfg, vocab, TINY_RESOLUTION)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let biases: Vec<_> = model.params.ids().filter(|&id| model.params.name(id).ends_with(".b")).collect();
    for id in biases {
        for i in 0..model.params.value(id).len() {
            *model.params.element_mut(id, i) = rng.random_range(-0.2..0.2);
        }
    }
    Ok(model)
}

/// Finite-difference check of the full training loss (KL + L^rc + L^rg) on
/// [`tiny_model`] with a two-sample batch.
pub fn composite_grad_check(seed: u64, step: f64) -> Result<GradCheckReport> {
    let model = tiny_model(seed)?;
    let samples = toy_samples(TINY_RESOLUTION, 2, &model.vocab);
    let batch: Vec<&Sample> = samples.iter().collect();
    grad_check(
        &model.params,
        |tape| {
            let (loss, _) = composite_loss(&model, tape, &batch, seed.wrapping_add(2), Mode::Train)?;
            Ok(loss)
        },
        step,
    )
}
