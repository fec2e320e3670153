//! Runnable oracle suites for the algebraic identities the inference and
//! SLAM layers rely on. Each suite is seeded and returns its worst error
//! alongside the tolerance it is held to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::{
    argmax_first, gaussian_logpdf, mle_classify, neg_kl_joint, neg_kl_joint_factored, random_feature, MleMode, PriorTable,
};
use crate::seeds::derive_seed;
use crate::slam::{
    simulate_world, synthetic_prior_table, weights_full, weights_reduced, DetectionEvidence, SlamConfig,
    WeightInputs, DEFAULT_ENUMERATION_CAP,
};
use crate::vae::kl_block;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str, instances: usize, max_error: f64, tolerance: f64) -> Self {
        SuiteReport { name: name.into(), instances, max_error, tolerance, passed: max_error < tolerance }
    }

    /// A suite that only passes with zero error.
    fn exact(name: &str, instances: usize, max_error: f64) -> Self {
        SuiteReport { name: name.into(), instances, max_error, tolerance: 0.0, passed: max_error == 0.0 }
    }
}

pub const KL_MC_SAMPLES: usize = 1_000_000;

/// Monte-Carlo `E_q[log q(z) - log p(z)]` for a diagonal posterior against a
/// unit-covariance prior.
pub fn kl_monte_carlo(mean: &[f64], std: &[f64], prior_mean: &[f64], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_norm_q: f64 = std.iter().map(|s| s.ln()).sum();
    let mut total = 0.0;
    for _ in 0..samples {
        let mut lq = -log_norm_q;
        let mut lp = 0.0;
        for d in 0..mean.len() {
            let e: f64 = rng.sample(StandardNormal);
            let z = mean[d] + std[d] * e;
            lq -= 0.5 * e * e;
            lp -= 0.5 * (z - prior_mean[d]).powi(2);
        }
        total += lq - lp;
    }
    total / samples as f64
}

/// Closed-form KL against [`kl_monte_carlo`] on 20 posteriors of 1 to 8
/// dimensions. Posterior stds lie in `[0.5, 1.5]` and means within 0.5 of the
/// prior mean per coordinate, which keeps the estimator's standard error
/// below 0.004 so the 0.01 tolerance tests the closed form, not the sampler.
pub fn kl_oracle_suite(seed: u64) -> Result<SuiteReport> {
    let errors = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let dim = 1 + (k as usize % 8);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[30, k]));
            let prior: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mean: Vec<f64> = prior.iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
            let std: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
            let exact = kl_block(&mean, &std, &prior)?;
            let mc = kl_monte_carlo(&mean, &std, &prior, KL_MC_SAMPLES, rng.random());
            Ok((exact - mc).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SuiteReport::new("kl-oracle", errors.len(), errors.iter().copied().fold(0.0, f64::max), 0.01))
}

/// Random table with `classes x instances` labels and a 4 + 3 dimensional joint block.
fn random_table(seed: u64, classes: usize, instances: usize) -> Result<PriorTable> {
    let f = |k: u64, d: usize| random_feature(d, derive_seed(seed, &[k])).mean;
    PriorTable::new(
        classes,
        instances,
        (0..classes as u64).map(|c| f(c, 4)).collect(),
        (0..(classes * instances) as u64).map(|k| f(1000 + k, 3)).collect(),
    )
}

/// `exp(-KL)` against the density-entropy factorization on 100 posteriors,
/// as relative error `|exp(a - b) - 1|`.
pub fn kl_identity_suite(seed: u64) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let table = random_table(derive_seed(seed, &[31, k, 0]), 3, 2)?;
        let feature = random_feature(table.feature_dim(), derive_seed(seed, &[31, k, 1]));
        let label = k as usize % table.len();
        let direct = neg_kl_joint(&feature, &table, label)?;
        let factored = neg_kl_joint_factored(&feature, &table, label)?;
        worst = worst.max((direct - factored).exp_m1().abs());
    }
    Ok(SuiteReport::new("kl-identity", 100, worst, 1e-9))
}

/// Weights from the full κ product against the reduced form on 100 random
/// worlds with at most 3 detections, landmarks and keyframes. The second
/// report is the worst row-sum deviation from 1 over both paths.
pub fn weight_equivalence_suite(seed: u64) -> Result<(SuiteReport, SuiteReport)> {
    let table = synthetic_prior_table(2, 2, (3, 3), 2.0, derive_seed(seed, &[32]))?;
    let results = (0..100u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[32, k]));
            let cfg = SlamConfig {
                landmarks: rng.random_range(1..=3),
                keyframes: rng.random_range(2..=3),
                sensor_range: rng.random_range(4.0..50.0),
                sigma_p: rng.random_range(0.1..1.0),
                injective: rng.random_bool(0.5),
                ..SlamConfig::default()
            };
            let world = simulate_world(&cfg, &table, rng.random())?;
            let evidence: Vec<Vec<DetectionEvidence>> = world
                .detections
                .iter()
                .map(|frame| {
                    frame
                        .iter()
                        .map(|_| DetectionEvidence {
                            log_a: -rng.random_range(1.0..10.0f64),
                            log_kappa_e: rng.random_range(-2000.0..-10.0),
                            log_kappa_kl_vt: rng.random_range(-20.0..5.0),
                        })
                        .collect()
                })
                .collect();
            let inputs = WeightInputs {
                detections: &world.detections,
                poses: &world.poses,
                landmarks: &world.landmarks,
                table: &table,
                noise: cfg.noise_model(),
                injective: cfg.injective && world.detections.iter().all(|d| d.len() <= cfg.landmarks),
                cap: DEFAULT_ENUMERATION_CAP,
            };
            let reduced = weights_reduced(&inputs)?;
            let full = weights_full(&inputs, &evidence)?;
            Ok((full.max_abs_difference(&reduced), reduced.max_row_error().max(full.max_row_error())))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let diff = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let rows = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((
        SuiteReport::new("weight-equivalence", results.len(), diff, 1e-9),
        SuiteReport::new("weight-normalization", results.len(), rows, 1e-12),
    ))
}

/// Argmax of the full κ product over every joint label against the argmax
/// of the prior density at the posterior mean, on 100 probes. The error is
/// the fraction of disagreeing probes.
pub fn mle_equivalence_suite(seed: u64) -> Result<SuiteReport> {
    let mut disagree = 0usize;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[33, k]));
        let table = random_table(rng.random(), rng.random_range(2..=5), rng.random_range(1..=4))?;
        let mut feature = random_feature(table.feature_dim(), rng.random());
        // half the probes sit near a prior mean so the winner is not always an outlier fit
        if k % 2 == 0 {
            let target = table.joint_mean(rng.random_range(0..table.len()));
            feature.mean = target.iter().map(|m| m + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        }
        let log_kappa_e: f64 = rng.random_range(-3000.0..0.0);
        let log_kappa_vt: f64 = rng.random_range(-30.0..0.0);
        let full: Vec<f64> = (0..table.len())
            .map(|l| Ok(log_kappa_e + log_kappa_vt + neg_kl_joint(&feature, &table, l)?))
            .collect::<Result<_>>()?;
        let density: Vec<f64> =
            (0..table.len()).map(|l| gaussian_logpdf(&feature.mean, &table.joint_mean(l))).collect::<Result<_>>()?;
        let classified = mle_classify(&table, &feature, MleMode::ClassAndInstance)?;
        let by_density = argmax_first(&density);
        let by_classifier = Some(classified.class * table.instances + classified.instance.unwrap_or(0));
        if argmax_first(&full) != by_density || by_density != by_classifier {
            disagree += 1;
        }
    }
    Ok(SuiteReport::exact("mle-equivalence", 100, disagree as f64 / 100.0))
}

/// All oracle suites in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    let (weights, rows) = weight_equivalence_suite(seed)?;
    Ok(vec![kl_oracle_suite(seed)?, kl_identity_suite(seed)?, weights, rows, mle_equivalence_suite(seed)?])
}
