use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::{Detection, Landmark, Pose};
use crate::error::{Error, Result};
use crate::inference::{log_kappa_e, log_kappa_kl_vt, log_sum_exp, neg_kl_joint, EncodedFeature, PriorTable};
use crate::vae::ModelCheckpoint;
use crate::voxeldata::VoxelGrid;

pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

/// Every assignment of `k` detections to `m` landmarks, lexicographic in
/// detection order; injective mode keeps only one-to-one assignments.
pub fn enumerate_associations(k: usize, m: usize, injective: bool, cap: usize) -> Result<Vec<Vec<usize>>> {
    let needed = (m as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(Error::EnumerationCap { needed, cap });
    }
    if m == 0 && k > 0 {
        return Err(Error::InvalidArgument("detections present but no landmarks".into()));
    }
    let mut out = Vec::with_capacity(needed as usize);
    let mut current = vec![0usize; k];
    loop {
        if !injective || is_injective(&current) {
            out.push(current.clone());
        }
        // odometer increment, last detection fastest
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < m {
                break;
            }
            current[pos] = 0;
        }
    }
}

fn is_injective(a: &[usize]) -> bool {
    (0..a.len()).all(|i| (i + 1..a.len()).all(|j| a[i] != a[j]))
}

/// Associations assigning detection `i` to landmark `j`.
pub fn associations_with(assoc: &[Vec<usize>], i: usize, j: usize) -> impl Iterator<Item = &Vec<usize>> {
    assoc.iter().filter(move |a| a[i] == j)
}

/// Position likelihood model: isotropic Gaussian with standard deviation `sigma_p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub sigma_p: f64,
    pub odometry_sigma_position: f64,
    pub odometry_sigma_yaw: f64,
}

impl NoiseModel {
    /// `log N(observed; predicted, sigma_p^2 I)` in three dimensions.
    pub fn position_logpdf(&self, observed: [f64; 3], predicted: [f64; 3]) -> f64 {
        let s2 = self.sigma_p * self.sigma_p;
        let sq: f64 = observed.iter().zip(&predicted).map(|(a, b)| (a - b) * (a - b)).sum();
        -1.5 * (2.0 * std::f64::consts::PI * s2).ln() - sq / (2.0 * s2)
    }
}

/// `w[t][i][j]`: probability that detection `i` of keyframe `t` came from landmark `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl WeightMatrix {
    pub fn keyframes(&self) -> usize {
        self.weights.len()
    }

    /// Largest `|Σ_j w - 1|` over all rows.
    pub fn max_row_error(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &WeightMatrix) -> f64 {
        self.weights
            .iter()
            .flatten()
            .flatten()
            .zip(other.weights.iter().flatten().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-detection factors of the full likelihood that do not depend on the landmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvidence {
    /// `log a`, the uniform viewpoint and translation label prior.
    pub log_a: f64,
    pub log_kappa_e: f64,
    pub log_kappa_kl_vt: f64,
}

impl DetectionEvidence {
    /// Encodes `view` and evaluates the label-independent κ factors.
    pub fn from_model(
        model: &ModelCheckpoint,
        view: &VoxelGrid,
        full: &VoxelGrid,
        mc_samples: usize,
        seed: u64,
    ) -> Result<(EncodedFeature, DetectionEvidence)> {
        let post = model.encode(view)?;
        let evidence = DetectionEvidence {
            log_a: -((model.vocab.viewpoints * model.vocab.translations) as f64).ln(),
            log_kappa_e: log_kappa_e(model, &post, full, mc_samples, seed)?,
            log_kappa_kl_vt: log_kappa_kl_vt(model, &post)?,
        };
        Ok((EncodedFeature::from_posterior(&post), evidence))
    }
}

/// Shared inputs of both weight paths.
#[derive(Clone, Copy)]
pub struct WeightInputs<'a> {
    pub detections: &'a [Vec<Detection>],
    pub poses: &'a [Pose],
    pub landmarks: &'a [Landmark],
    pub table: &'a PriorTable,
    pub noise: NoiseModel,
    pub injective: bool,
    pub cap: usize,
}

impl WeightInputs<'_> {
    fn check(&self) -> Result<()> {
        if self.detections.len() != self.poses.len() {
            return Err(Error::shape(
                "weights",
                format!("{} detection frames for {} poses", self.detections.len(), self.poses.len()),
            ));
        }
        if self.landmarks.iter().any(|l| l.label >= self.table.len()) {
            return Err(Error::Vocabulary("landmark label outside the prior table".into()));
        }
        Ok(())
    }
}

/// Normalized marginals of detection-to-landmark assignments from a per-pair
/// log score, by exhaustive enumeration with log-sum-exp.
fn marginals(score: &[Vec<f64>], m: usize, injective: bool, cap: usize) -> Result<Vec<Vec<f64>>> {
    let k = score.len();
    let assoc = enumerate_associations(k, m, injective, cap)?;
    if assoc.is_empty() {
        return Err(Error::InvalidArgument(format!("no injective association of {k} detections to {m} landmarks")));
    }
    let logp: Vec<f64> = assoc.iter().map(|a| a.iter().enumerate().map(|(i, &j)| score[i][j]).sum()).collect();
    let total = log_sum_exp(&logp);
    let mut w = vec![vec![0.0; m]; k];
    for (a, lp) in assoc.iter().zip(&logp) {
        let p = (lp - total).exp();
        for (i, &j) in a.iter().enumerate() {
            w[i][j] += p;
        }
    }
    Ok(w)
}

fn weights_with(inputs: &WeightInputs<'_>, score: impl Fn(usize, usize, usize) -> Result<f64> + Sync) -> Result<WeightMatrix> {
    inputs.check()?;
    let m = inputs.landmarks.len();
    let weights = (0..inputs.poses.len())
        .into_par_iter()
        .map(|t| {
            let s = (0..inputs.detections[t].len())
                .map(|i| (0..m).map(|j| score(t, i, j)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            marginals(&s, m, inputs.injective, inputs.cap)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightMatrix { weights })
}

/// Position log-likelihood of detection `i` at keyframe `t` under landmark `j`.
pub fn detection_position_logpdf(inputs: &WeightInputs<'_>, t: usize, i: usize, j: usize) -> f64 {
    let predicted = inputs.poses[t].to_local(inputs.landmarks[j].position);
    inputs.noise.position_logpdf(inputs.detections[t][i].position, predicted)
}

/// Weights with the label likelihood replaced by the prior density of the
/// encoded feature: `p(s^p | x, l^p) * p(mu | l^c)`.
pub fn weights_reduced(inputs: &WeightInputs<'_>) -> Result<WeightMatrix> {
    weights_with(inputs, |t, i, j| {
        let label = inputs.table.log_density(&inputs.detections[t][i].feature, inputs.landmarks[j].label)?;
        Ok(detection_position_logpdf(inputs, t, i, j) + label)
    })
}

/// Weights from positions alone, ignoring labels.
pub fn weights_position_only(inputs: &WeightInputs<'_>) -> Result<WeightMatrix> {
    weights_with(inputs, |t, i, j| Ok(detection_position_logpdf(inputs, t, i, j)))
}

/// Weights with the complete approximated likelihood
/// `a * κ_e * κ_kl(view) * exp(-KL(q_C || p(.|l^c)))` for every detection,
/// before any cancellation. `evidence[t][i]` belongs to detection `i` of keyframe `t`.
pub fn weights_full(inputs: &WeightInputs<'_>, evidence: &[Vec<DetectionEvidence>]) -> Result<WeightMatrix> {
    if evidence.len() != inputs.detections.len()
        || evidence.iter().zip(inputs.detections).any(|(e, d)| e.len() != d.len())
    {
        return Err(Error::shape("weights_full", "evidence does not match detections"));
    }
    weights_with(inputs, |t, i, j| {
        let e = &evidence[t][i];
        let kl_c = neg_kl_joint(&inputs.detections[t][i].feature, inputs.table, inputs.landmarks[j].label)?;
        Ok(detection_position_logpdf(inputs, t, i, j) + e.log_a + e.log_kappa_e + e.log_kappa_kl_vt + kl_c)
    })
}

/// `-log Σ_D Π_k p(s_k | x, l)` summed over keyframes: the association-marginal
/// negative log-likelihood of all detections.
pub fn detection_nll(inputs: &WeightInputs<'_>) -> Result<f64> {
    inputs.check()?;
    let m = inputs.landmarks.len();
    let per_frame = (0..inputs.poses.len())
        .into_par_iter()
        .map(|t| {
            let k = inputs.detections[t].len();
            let assoc = enumerate_associations(k, m, inputs.injective, inputs.cap)?;
            let score = (0..k)
                .map(|i| {
                    (0..m)
                        .map(|j| {
                            let d = &inputs.detections[t][i];
                            Ok(detection_position_logpdf(inputs, t, i, j)
                                + inputs.table.log_density(&d.feature, inputs.landmarks[j].label)?)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let logp: Vec<f64> =
                assoc.iter().map(|a| a.iter().enumerate().map(|(i, &j)| score[i][j]).sum()).collect();
            Ok(-log_sum_exp(&logp))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_frame.iter().sum())
}
