use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{gaussian_logpdf, EncodedFeature, PriorTable};
use crate::error::Result;
use crate::vae::{kl_block, reparameterize, Block, ModelCheckpoint, PosteriorBlocks, PredictedShape};
use crate::voxeldata::{LabelTuple, VoxelGrid};

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Factors of the approximated label likelihood, all in log domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaTerms {
    /// Monte-Carlo `E_z[log p(full | z)]` under the Bernoulli decoder.
    pub log_kappa_e: f64,
    /// `log Σ_v exp(-KL_v) + log Σ_t exp(-KL_t)`.
    pub log_kappa_kl_vt: f64,
    /// `-KL` of the joint class-instance block, evaluated directly.
    pub log_kappa_kl_c: f64,
    /// The same quantity as `log p(mean | label) + H - ½ Σ std²`.
    pub log_kappa_kl_c_factored: f64,
    /// Entropy of the class-instance posterior.
    pub entropy: f64,
}

/// Entropy of a diagonal Gaussian with the given standard deviations.
pub fn gaussian_entropy(std: &[f64]) -> f64 {
    std.iter().map(|s| 0.5 * (LN_2PI_E + 2.0 * s.ln())).sum()
}

/// `log Σ exp(x)` with max subtraction; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-KL` of the joint class-instance posterior against prior label `label`, directly.
pub fn neg_kl_joint(feature: &EncodedFeature, table: &PriorTable, label: usize) -> Result<f64> {
    let mu = table.joint_mean(label);
    Ok(-kl_block(&feature.mean, &feature.std, &mu)?)
}

/// `-KL` of the joint block through the density-entropy factorization.
pub fn neg_kl_joint_factored(feature: &EncodedFeature, table: &PriorTable, label: usize) -> Result<f64> {
    let quad: f64 = feature.std.iter().map(|s| s * s).sum();
    Ok(gaussian_logpdf(&feature.mean, &table.joint_mean(label))? + gaussian_entropy(&feature.std) - 0.5 * quad)
}

/// Bernoulli log-likelihood of `full` under predicted probabilities.
pub fn bernoulli_log_likelihood(pred: &PredictedShape, full: &VoxelGrid) -> f64 {
    pred.probs
        .iter()
        .zip(full.cells())
        .map(|(&p, &t)| if t == 1 { p.ln() } else { (1.0 - p).ln() })
        .sum()
}

/// `log κ_e`: mean Bernoulli log-likelihood over `samples` fixed-seed draws.
pub fn log_kappa_e(
    model: &ModelCheckpoint,
    post: &PosteriorBlocks,
    full: &VoxelGrid,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let draws = reparameterize(post, samples, seed)?;
    let mut acc = 0.0;
    for z in &draws {
        acc += bernoulli_log_likelihood(&model.decode(z)?, full);
    }
    Ok(acc / draws.len() as f64)
}

/// `log κ_kl(s^o)`: sums over every viewpoint and translation prior.
pub fn log_kappa_kl_vt(model: &ModelCheckpoint, post: &PosteriorBlocks) -> Result<f64> {
    let base = LabelTuple { class_id: 0, instance_id: 0, viewpoint_id: 0, translation_id: 0 };
    let mut total = 0.0;
    for (block, n) in [(Block::View, model.vocab.viewpoints), (Block::Translation, model.vocab.translations)] {
        let terms = (0..n)
            .map(|k| {
                let label = match block {
                    Block::View => LabelTuple { viewpoint_id: k, ..base },
                    _ => LabelTuple { translation_id: k, ..base },
                };
                let mu = model.prior_mean(block, &label)?;
                Ok(-kl_block(post.mean(block), post.std(block), &mu)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        total += log_sum_exp(&terms);
    }
    Ok(total)
}

/// All κ factors for one view/full-shape pair and candidate `(class, instance)` label.
pub fn kappa_terms(
    model: &ModelCheckpoint,
    table: &PriorTable,
    view: &VoxelGrid,
    full: &VoxelGrid,
    label: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<KappaTerms> {
    let post = model.encode(view)?;
    let feature = EncodedFeature::from_posterior(&post);
    Ok(KappaTerms {
        log_kappa_e: log_kappa_e(model, &post, full, mc_samples, seed)?,
        log_kappa_kl_vt: log_kappa_kl_vt(model, &post)?,
        log_kappa_kl_c: neg_kl_joint(&feature, table, label)?,
        log_kappa_kl_c_factored: neg_kl_joint_factored(&feature, table, label)?,
        entropy: gaussian_entropy(&feature.std),
    })
}

/// Seeded random posterior for identity checks: means in `[-3, 3]`, stds in `[0.05, 2]`.
pub fn random_feature(dim: usize, seed: u64) -> EncodedFeature {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EncodedFeature {
        mean: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
        std: (0..dim).map(|_| rng.random_range(0.05..2.0)).collect(),
    }
}
