use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::geometry::{maximize_geometry, GeometryProblem};
use super::weights::{detection_nll, weights_position_only, weights_reduced, NoiseModel, WeightInputs, WeightMatrix};
use super::world::{wrap_angle, Detection, Landmark, Pose, SlamConfig, World};
use crate::error::{Error, Result};
use crate::inference::PriorTable;

impl SlamConfig {
    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma_p: self.sigma_p,
            odometry_sigma_position: self.odometry_sigma_position,
            odometry_sigma_yaw: self.odometry_sigma_yaw,
        }
    }
}

/// Per landmark, the label maximizing `Σ_{t,k} w[t][k][j] log p(mu_k | label)`;
/// ties go to the lowest label index.
pub fn maximize_labels(weights: &WeightMatrix, detections: &[Vec<Detection>], table: &PriorTable) -> Result<Vec<usize>> {
    if weights.keyframes() != detections.len() {
        return Err(Error::shape("maximize_labels", "weights and detections disagree on keyframes"));
    }
    let m = weights.weights.iter().flatten().map(Vec::len).next().unwrap_or(0);
    let mut scores = vec![vec![0.0; table.len()]; m];
    for (frame_w, frame_d) in weights.weights.iter().zip(detections) {
        if frame_w.len() != frame_d.len() {
            return Err(Error::shape("maximize_labels", "weights and detections disagree on detection count"));
        }
        for (row, det) in frame_w.iter().zip(frame_d) {
            if row.len() != m {
                return Err(Error::shape("maximize_labels", "ragged weight rows"));
            }
            let dens = (0..table.len()).map(|l| table.log_density(&det.feature, l)).collect::<Result<Vec<_>>>()?;
            for (j, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    for (s, d) in scores[j].iter_mut().zip(&dens) {
                        *s += w * d;
                    }
                }
            }
        }
    }
    Ok(scores
        .iter()
        .map(|s| {
            let mut best = 0;
            for (l, &v) in s.iter().enumerate() {
                if v > s[best] {
                    best = l;
                }
            }
            best
        })
        .collect())
}

/// Gaussian negative log-likelihood of the odometry chain given `poses`.
pub fn odometry_nll(poses: &[Pose], odometry: &[Pose], noise: &NoiseModel) -> f64 {
    let (sp, sy) = (noise.odometry_sigma_position, noise.odometry_sigma_yaw);
    let norm = 1.5 * (2.0 * PI * sp * sp).ln() + 0.5 * (2.0 * PI * sy * sy).ln();
    poses
        .windows(2)
        .zip(odometry)
        .map(|(w, m)| {
            let pred = w[0].relative(&w[1]);
            let sq: f64 = pred.position.iter().zip(&m.position).map(|(a, b)| (a - b) * (a - b)).sum();
            let dy = wrap_angle(pred.yaw - m.yaw);
            norm + sq / (2.0 * sp * sp) + dy * dy / (2.0 * sy * sy)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub pose_rmse: f64,
    /// Dead-reckoning error for comparison.
    pub odometry_rmse: f64,
    pub landmark_rmse: f64,
    /// Fraction of landmarks whose joint (class, instance) label is correct.
    pub label_accuracy: f64,
    pub class_accuracy: f64,
    /// Fraction of detections whose largest weight falls on their source landmark.
    pub association_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub poses: Vec<Pose>,
    pub landmarks: Vec<Landmark>,
    pub weights: WeightMatrix,
    /// Odometry plus association-marginal detection NLL, at initialization and after every iteration.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: EmDiagnostics,
}

fn rmse(a: impl Iterator<Item = ([f64; 3], [f64; 3])>) -> f64 {
    let (sum, n) = a.fold((0.0, 0usize), |(s, n), (p, q)| {
        (s + p.iter().zip(&q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(), n + 1)
    });
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn diagnostics(world: &World, table: &PriorTable, poses: &[Pose], landmarks: &[Landmark], weights: &WeightMatrix) -> EmDiagnostics {
    let pose_rmse = rmse(poses.iter().zip(&world.poses).map(|(a, b)| (a.position, b.position)));
    let odometry_rmse = rmse(world.odometry_trajectory().iter().zip(&world.poses).map(|(a, b)| (a.position, b.position)));
    let landmark_rmse = rmse(landmarks.iter().zip(&world.landmarks).map(|(a, b)| (a.position, b.position)));
    let m = world.landmarks.len().max(1) as f64;
    let label_accuracy = landmarks.iter().zip(&world.landmarks).filter(|(a, b)| a.label == b.label).count() as f64 / m;
    let class_accuracy =
        landmarks.iter().zip(&world.landmarks).filter(|(a, b)| table.class_of(a.label) == table.class_of(b.label)).count()
            as f64
            / m;
    let (mut hits, mut total) = (0usize, 0usize);
    for (frame_w, frame_d) in weights.weights.iter().zip(&world.detections) {
        for (row, det) in frame_w.iter().zip(frame_d) {
            let Some(src) = det.source else { continue };
            total += 1;
            let best = row.iter().enumerate().fold(0, |b, (j, &w)| if w > row[b] { j } else { b });
            hits += usize::from(best == src);
        }
    }
    let association_accuracy = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
    EmDiagnostics { pose_rmse, odometry_rmse, landmark_rmse, label_accuracy, class_accuracy, association_accuracy }
}

fn weight_inputs<'a>(
    world: &'a World,
    poses: &'a [Pose],
    landmarks: &'a [Landmark],
    table: &'a PriorTable,
    config: &SlamConfig,
) -> WeightInputs<'a> {
    WeightInputs {
        detections: &world.detections,
        poses,
        landmarks,
        table,
        noise: config.noise_model(),
        injective: config.injective,
        cap: config.enumeration_cap,
    }
}

/// Landmark guesses: true positions perturbed by `landmark_init_sigma`.
pub fn initial_landmarks(world: &World, config: &SlamConfig, seed: u64) -> Result<Vec<Landmark>> {
    let noise = Normal::new(0.0, config.landmark_init_sigma)
        .map_err(|e| Error::Config(format!("slam.landmark_init_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(world
        .landmarks
        .iter()
        .map(|l| Landmark { position: l.position.map(|v| v + noise.sample(&mut rng)), label: 0 })
        .collect())
}

/// EM over poses, landmark positions and labels, starting from dead reckoning.
/// Each iteration computes association weights, then maximizes geometry and
/// labels under them; it stops when the cost drops by less than `tolerance`.
pub fn em_run(world: &World, table: &PriorTable, config: &SlamConfig, seed: u64) -> Result<EmResult> {
    config.validate()?;
    if !(config.odometry_sigma_position > 0.0 && config.odometry_sigma_yaw > 0.0) {
        return Err(Error::Config("EM needs positive odometry noise levels".into()));
    }
    if world.poses.len() < 2 || world.odometry.len() + 1 != world.poses.len() || world.detections.len() != world.poses.len() {
        return Err(Error::InvalidArgument("world needs >= 2 poses with matching odometry and detections".into()));
    }
    if world.landmarks.len() != config.landmarks {
        return Err(Error::Config(format!(
            "world has {} landmarks, config expects {}",
            world.landmarks.len(),
            config.landmarks
        )));
    }
    let noise = config.noise_model();
    let mut poses = world.odometry_trajectory();
    let mut landmarks = initial_landmarks(world, config, seed)?;
    let w0 = weights_position_only(&weight_inputs(world, &poses, &landmarks, table, config))?;
    for (l, label) in landmarks.iter_mut().zip(maximize_labels(&w0, &world.detections, table)?) {
        l.label = label;
    }
    let cost = |poses: &[Pose], landmarks: &[Landmark]| -> Result<f64> {
        Ok(odometry_nll(poses, &world.odometry, &noise) + detection_nll(&weight_inputs(world, poses, landmarks, table, config))?)
    };
    let mut costs = vec![cost(&poses, &landmarks)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let weights = weights_reduced(&weight_inputs(world, &poses, &landmarks, table, config))?;
        let problem = GeometryProblem { weights: &weights, detections: &world.detections, odometry: &world.odometry, noise };
        let positions: Vec<[f64; 3]> = landmarks.iter().map(|l| l.position).collect();
        let geo = maximize_geometry(&problem, &poses, &positions)?;
        poses = geo.poses;
        let labels = maximize_labels(&weights, &world.detections, table)?;
        landmarks = geo.landmarks.into_iter().zip(labels).map(|(position, label)| Landmark { position, label }).collect();
        let c = cost(&poses, &landmarks)?;
        let prev = *costs.last().expect("initial cost");
        costs.push(c);
        if prev - c < config.tolerance {
            converged = true;
            break;
        }
    }
    let weights = weights_reduced(&weight_inputs(world, &poses, &landmarks, table, config))?;
    let diagnostics = diagnostics(world, table, &poses, &landmarks, &weights);
    Ok(EmResult { poses, landmarks, weights, costs, iterations, converged, diagnostics })
}
