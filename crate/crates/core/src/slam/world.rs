use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{EncodedFeature, PriorTable};

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    /// Heading about the vertical axis, in `[-pi, pi)`.
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: [f64; 3], yaw: f64) -> Self {
        Pose { position, yaw: wrap_angle(yaw) }
    }

    /// `R(yaw)^T (point - position)`: a world point in this pose's frame.
    pub fn to_local(&self, point: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let d = [point[0] - self.position[0], point[1] - self.position[1], point[2] - self.position[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    }

    /// Inverse of [`Pose::to_local`].
    pub fn to_world(&self, local: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.position[0] + c * local[0] - s * local[1],
            self.position[1] + s * local[0] + c * local[1],
            self.position[2] + local[2],
        ]
    }

    /// Motion from `self` to `next` expressed in `self`'s frame.
    pub fn relative(&self, next: &Pose) -> Pose {
        Pose::new(self.to_local(next.position), next.yaw - self.yaw)
    }

    /// Composes a relative motion onto this pose.
    pub fn compose(&self, delta: &Pose) -> Pose {
        Pose::new(self.to_world(delta.position), self.yaw + delta.yaw)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub position: [f64; 3],
    /// Joint label index `class * instances + instance` into a [`PriorTable`].
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Landmark position in the robot frame.
    pub position: [f64; 3],
    pub feature: EncodedFeature,
    /// True landmark index; for evaluation only.
    pub source: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlamConfig {
    pub landmarks: usize,
    pub keyframes: usize,
    /// Radius of the circular trajectory (m).
    pub radius: f64,
    /// Landmarks lie within this radial distance of the trajectory circle (m).
    pub landmark_spread: f64,
    pub sensor_range: f64,
    /// Detection position noise (m).
    pub sigma_p: f64,
    /// Feature noise about the true label's prior mean.
    pub sigma_f: f64,
    /// Posterior standard deviation attached to simulated features.
    pub feature_std: f64,
    pub odometry_sigma_position: f64,
    pub odometry_sigma_yaw: f64,
    /// Noise on the initial landmark position guesses (m).
    pub landmark_init_sigma: f64,
    pub injective: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub enumeration_cap: usize,
}

impl Default for SlamConfig {
    fn default() -> Self {
        SlamConfig {
            landmarks: 5,
            keyframes: 20,
            radius: 5.0,
            landmark_spread: 2.0,
            sensor_range: 8.0,
            sigma_p: 0.1,
            sigma_f: 0.5,
            feature_std: 0.5,
            odometry_sigma_position: 0.05,
            odometry_sigma_yaw: 0.03,
            landmark_init_sigma: 0.3,
            injective: false,
            max_iterations: 30,
            tolerance: 1e-6,
            enumeration_cap: 100_000,
        }
    }
}

impl SlamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.landmarks == 0 {
            return bad("slam.landmarks must be >= 1");
        }
        if self.keyframes < 2 {
            return bad("slam.keyframes must be >= 2");
        }
        let nonneg = [
            self.sensor_range,
            self.sigma_f,
            self.odometry_sigma_position,
            self.odometry_sigma_yaw,
            self.landmark_init_sigma,
            self.landmark_spread,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return bad("slam noise levels and ranges must be non-negative");
        }
        if !(self.sigma_p > 0.0) || !(self.feature_std > 0.0) {
            return bad("slam.sigma_p and slam.feature_std must be positive");
        }
        if !(self.radius > 0.0) {
            return bad("slam.radius must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub poses: Vec<Pose>,
    pub landmarks: Vec<Landmark>,
    /// `odometry[t]` is the noisy motion from keyframe `t` to `t + 1`.
    pub odometry: Vec<Pose>,
    pub detections: Vec<Vec<Detection>>,
}

impl World {
    /// Dead-reckoned trajectory anchored at the first true pose.
    pub fn odometry_trajectory(&self) -> Vec<Pose> {
        let mut out = vec![self.poses[0]];
        for delta in &self.odometry {
            let next = out.last().expect("non-empty").compose(delta);
            out.push(next);
        }
        out
    }
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("validated non-negative sigma")
}

/// Seeded world: the robot circles the origin counter-clockwise, landmarks
/// scatter around its path with labels drawn from `table`.
pub fn simulate_world(config: &SlamConfig, table: &PriorTable, seed: u64) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_count = config.keyframes;
    let poses: Vec<Pose> = (0..t_count)
        .map(|t| {
            let theta = 2.0 * PI * t as f64 / t_count as f64;
            Pose::new([config.radius * theta.cos(), config.radius * theta.sin(), 0.0], theta + PI / 2.0)
        })
        .collect();

    // one landmark per equal angular sector, so every part of the loop sees some
    let sector = 2.0 * PI / config.landmarks as f64;
    let landmarks: Vec<Landmark> = (0..config.landmarks)
        .map(|j| {
            let theta = sector * (j as f64 + rng.random_range(0.0..1.0));
            let r = config.radius + rng.random_range(-1.0..=1.0) * config.landmark_spread;
            let z = rng.random_range(0.0..=1.0);
            Landmark { position: [r * theta.cos(), r * theta.sin(), z], label: rng.random_range(0..table.len()) }
        })
        .collect();

    let (odo_p, odo_y) = (gaussian(config.odometry_sigma_position), gaussian(config.odometry_sigma_yaw));
    let odometry = poses
        .windows(2)
        .map(|w| {
            let truth = w[0].relative(&w[1]);
            let p = truth.position;
            Pose::new(
                [p[0] + odo_p.sample(&mut rng), p[1] + odo_p.sample(&mut rng), p[2] + odo_p.sample(&mut rng)],
                truth.yaw + odo_y.sample(&mut rng),
            )
        })
        .collect();

    let (pos_noise, feat_noise) = (gaussian(config.sigma_p), gaussian(config.sigma_f));
    let detections = poses
        .iter()
        .map(|pose| {
            landmarks
                .iter()
                .enumerate()
                .filter(|(_, l)| {
                    let d = pose.to_local(l.position);
                    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= config.sensor_range
                })
                .map(|(j, l)| {
                    let local = pose.to_local(l.position);
                    Detection {
                        position: local.map(|v| v + pos_noise.sample(&mut rng)),
                        feature: EncodedFeature {
                            mean: table.joint_mean(l.label).iter().map(|m| m + feat_noise.sample(&mut rng)).collect(),
                            std: vec![config.feature_std; table.feature_dim()],
                        },
                        source: Some(j),
                    }
                })
                .collect()
        })
        .collect();

    Ok(World { poses, landmarks, odometry, detections })
}

/// Seeded prior table whose joint means are pairwise at least
/// `min_distance` apart: class means are mutually separated, and so are all
/// instance means.
pub fn synthetic_prior_table(
    classes: usize,
    instances: usize,
    dims: (usize, usize),
    min_distance: f64,
    seed: u64,
) -> Result<PriorTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_means = separated_points(&mut rng, classes, dims.0, min_distance)?;
    let instance_means = separated_points(&mut rng, classes * instances, dims.1, min_distance)?;
    PriorTable::new(classes, instances, class_means, instance_means)
}

/// Rejection sampling in a cube sized so `n` points fit comfortably.
fn separated_points<R: Rng>(rng: &mut R, n: usize, dim: usize, min_distance: f64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("prior dimension must be positive".into()));
    }
    let half = min_distance * (n as f64).powf(1.0 / dim as f64).max(1.0);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..1_000_000 {
        if points.len() == n {
            break;
        }
        let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(-half..=half)).collect();
        let far = points
            .iter()
            .all(|m| m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_distance);
        if far {
            points.push(cand);
        }
    }
    if points.len() < n {
        return Err(Error::InvalidArgument(format!("could not place {n} points {min_distance} apart in {dim}-D")));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PriorTable {
        synthetic_prior_table(3, 2, (8, 8), 4.0, 1).unwrap()
    }

    #[test]
    fn synthetic_table_is_separated() {
        let t = table();
        for a in 0..t.len() {
            for b in a + 1..t.len() {
                let (x, y) = (t.joint_mean(a), t.joint_mean(b));
                let d = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                assert!(d >= 4.0);
            }
        }
    }

    #[test]
    fn frames_roundtrip() {
        let p = Pose::new([1.0, -2.0, 0.5], 2.0);
        let q = Pose::new([0.3, 0.7, 0.1], -1.2);
        let l = [4.0, 1.0, 2.0];
        let back = p.to_world(p.to_local(l));
        assert!(back.iter().zip(&l).all(|(a, b)| (a - b).abs() < 1e-12));
        let r = p.compose(&p.relative(&q));
        assert!((r.yaw - q.yaw).abs() < 1e-12);
        assert!(r.position.iter().zip(&q.position).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_detections_are_exact() {
        let cfg = SlamConfig {
            sigma_p: 1e-300,
            sigma_f: 0.0,
            odometry_sigma_position: 0.0,
            odometry_sigma_yaw: 0.0,
            sensor_range: 100.0,
            ..SlamConfig::default()
        };
        let t = table();
        let w = simulate_world(&cfg, &t, 3).unwrap();
        assert_eq!(w, simulate_world(&cfg, &t, 3).unwrap());
        for (pose, dets) in w.poses.iter().zip(&w.detections) {
            assert_eq!(dets.len(), cfg.landmarks);
            for d in dets {
                let l = &w.landmarks[d.source.unwrap()];
                let expect = pose.to_local(l.position);
                assert!(d.position.iter().zip(&expect).all(|(a, b)| (a - b).abs() < 1e-12));
                assert_eq!(d.feature.mean, t.joint_mean(l.label));
            }
        }
        let odo = w.odometry_trajectory();
        for (a, b) in odo.iter().zip(&w.poses) {
            assert!(a.position.iter().zip(&b.position).all(|(x, y)| (x - y).abs() < 1e-9));
        }
    }

    #[test]
    fn zero_range_sees_nothing_and_short_trajectory_fails() {
        let t = table();
        let w = simulate_world(&SlamConfig { sensor_range: 0.0, ..SlamConfig::default() }, &t, 1).unwrap();
        assert!(w.detections.iter().all(Vec::is_empty));
        assert!(simulate_world(&SlamConfig { keyframes: 1, ..SlamConfig::default() }, &t, 1).is_err());
    }
}
