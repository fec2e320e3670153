use nalgebra::{DMatrix, DVector};

use super::weights::{NoiseModel, WeightMatrix};
use super::world::{wrap_angle, Detection, Pose};
use crate::error::{Error, Result};

pub const MAX_GN_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryResult {
    pub poses: Vec<Pose>,
    pub landmarks: Vec<[f64; 3]>,
    /// Weighted least-squares cost before the first and after every accepted step.
    pub costs: Vec<f64>,
}

/// Inputs of the geometric maximization step.
#[derive(Clone, Copy)]
pub struct GeometryProblem<'a> {
    pub weights: &'a WeightMatrix,
    pub detections: &'a [Vec<Detection>],
    /// `odometry[t]` measures the motion from keyframe `t` to `t + 1`.
    pub odometry: &'a [Pose],
    pub noise: NoiseModel,
}

fn rt(yaw: f64) -> [[f64; 3]; 3] {
    let (s, c) = yaw.sin_cos();
    [[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn drt(yaw: f64) -> [[f64; 3]; 3] {
    let (s, c) = yaw.sin_cos();
    [[-s, c, 0.0], [-c, -s, 0.0], [0.0, 0.0, 0.0]]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

impl GeometryProblem<'_> {
    fn check(&self, poses: &[Pose], landmarks: &[[f64; 3]]) -> Result<()> {
        let t = poses.len();
        if t == 0 || self.odometry.len() + 1 != t || self.detections.len() != t || self.weights.keyframes() != t {
            return Err(Error::shape("maximize_geometry", "poses, odometry, detections and weights disagree"));
        }
        for (frame, (dets, w)) in self.detections.iter().zip(&self.weights.weights).enumerate() {
            if dets.len() != w.len() || w.iter().any(|row| row.len() != landmarks.len()) {
                return Err(Error::shape("maximize_geometry", format!("weights of keyframe {frame} do not match")));
            }
        }
        Ok(())
    }

    /// Residual vector and, on request, its Jacobian over poses `1..T`
    /// (x, y, z, yaw each) followed by landmarks (x, y, z each).
    fn linearize(&self, poses: &[Pose], landmarks: &[[f64; 3]], jacobian: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let t_count = poses.len();
        let cols = 4 * (t_count - 1) + 3 * landmarks.len();
        let pose_col = |t: usize| (t > 0).then(|| 4 * (t - 1));
        let lm_col = |j: usize| 4 * (t_count - 1) + 3 * j;
        let mut r = Vec::new();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let n = self.noise;

        for (t, m) in self.odometry.iter().enumerate() {
            let (a, b) = (&poses[t], &poses[t + 1]);
            let d = sub3(b.position, a.position);
            let pred = mat_vec(&rt(a.yaw), d);
            let dpred = mat_vec(&drt(a.yaw), d);
            let rot = rt(a.yaw);
            let s = n.odometry_sigma_position;
            for k in 0..3 {
                r.push((pred[k] - m.position[k]) / s);
                if jacobian {
                    let mut row = Vec::new();
                    for c in 0..3 {
                        if let Some(pb) = pose_col(t + 1) {
                            row.push((pb + c, rot[k][c] / s));
                        }
                        if let Some(pa) = pose_col(t) {
                            row.push((pa + c, -rot[k][c] / s));
                        }
                    }
                    if let Some(pa) = pose_col(t) {
                        row.push((pa + 3, dpred[k] / s));
                    }
                    rows.push(row);
                }
            }
            let sy = n.odometry_sigma_yaw;
            r.push(wrap_angle(b.yaw - a.yaw - m.yaw) / sy);
            if jacobian {
                let mut row = Vec::new();
                if let Some(pb) = pose_col(t + 1) {
                    row.push((pb + 3, 1.0 / sy));
                }
                if let Some(pa) = pose_col(t) {
                    row.push((pa + 3, -1.0 / sy));
                }
                rows.push(row);
            }
        }

        for (t, dets) in self.detections.iter().enumerate() {
            let pose = &poses[t];
            let (rot, drot) = (rt(pose.yaw), drt(pose.yaw));
            for (i, det) in dets.iter().enumerate() {
                for (j, lm) in landmarks.iter().enumerate() {
                    let w = self.weights.weights[t][i][j];
                    if w <= 0.0 {
                        continue;
                    }
                    let scale = w.sqrt() / n.sigma_p;
                    let d = sub3(*lm, pose.position);
                    let pred = mat_vec(&rot, d);
                    let dpred = mat_vec(&drot, d);
                    for k in 0..3 {
                        r.push(scale * (pred[k] - det.position[k]));
                        if jacobian {
                            let mut row = Vec::new();
                            for c in 0..3 {
                                row.push((lm_col(j) + c, scale * rot[k][c]));
                                if let Some(p) = pose_col(t) {
                                    row.push((p + c, -scale * rot[k][c]));
                                }
                            }
                            if let Some(p) = pose_col(t) {
                                row.push((p + 3, scale * dpred[k]));
                            }
                            rows.push(row);
                        }
                    }
                }
            }
        }

        let jac = jacobian.then(|| {
            let mut j = DMatrix::zeros(rows.len(), cols);
            for (ri, row) in rows.iter().enumerate() {
                for &(c, v) in row {
                    j[(ri, c)] += v;
                }
            }
            j
        });
        (r, jac)
    }

    /// `½ Σ r²`: the weighted negative log-likelihood up to a constant.
    pub fn cost(&self, poses: &[Pose], landmarks: &[[f64; 3]]) -> Result<f64> {
        self.check(poses, landmarks)?;
        let (r, _) = self.linearize(poses, landmarks, false);
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
    }
}

fn apply_step(poses: &[Pose], landmarks: &[[f64; 3]], step: &DVector<f64>) -> (Vec<Pose>, Vec<[f64; 3]>) {
    let mut new_poses = poses.to_vec();
    for (t, p) in new_poses.iter_mut().enumerate().skip(1) {
        let b = 4 * (t - 1);
        *p = Pose::new(
            [p.position[0] + step[b], p.position[1] + step[b + 1], p.position[2] + step[b + 2]],
            p.yaw + step[b + 3],
        );
    }
    let off = 4 * (poses.len() - 1);
    let new_lms = landmarks
        .iter()
        .enumerate()
        .map(|(j, l)| [0, 1, 2].map(|c| l[c] + step[off + 3 * j + c]))
        .collect();
    (new_poses, new_lms)
}

/// Damped Gauss-Newton on odometry and weighted detection factors. The first
/// pose is held fixed; steps are accepted only if they lower the cost.
pub fn maximize_geometry(
    problem: &GeometryProblem<'_>,
    poses: &[Pose],
    landmarks: &[[f64; 3]],
) -> Result<GeometryResult> {
    problem.check(poses, landmarks)?;
    let mut poses = poses.to_vec();
    let mut landmarks = landmarks.to_vec();
    let mut cost = problem.cost(&poses, &landmarks)?;
    let mut costs = vec![cost];
    let mut lambda = 1e-6;
    'outer: for _ in 0..MAX_GN_ITERATIONS {
        let (r, jac) = problem.linearize(&poses, &landmarks, true);
        let jac = jac.expect("requested");
        let r = DVector::from_vec(r);
        let g = jac.transpose() * &r;
        let h = jac.transpose() * &jac;
        loop {
            let mut a = h.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda;
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Err(Error::Singular { lambda });
                }
                continue;
            };
            let step = chol.solve(&(-&g));
            let (np, nl) = apply_step(&poses, &landmarks, &step);
            let new_cost = problem.cost(&np, &nl)?;
            if new_cost <= cost {
                poses = np;
                landmarks = nl;
                cost = new_cost;
                costs.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if step.norm() < STEP_TOLERANCE {
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING || step.norm() < STEP_TOLERANCE {
                break 'outer;
            }
        }
    }
    Ok(GeometryResult { poses, landmarks, costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::EncodedFeature;

    fn det(x: f64) -> Detection {
        Detection {
            position: [x, 0.0, 0.0],
            feature: EncodedFeature { mean: vec![0.0], std: vec![1.0] },
            source: None,
        }
    }

    #[test]
    fn linear_world_matches_normal_equations() {
        let (so, sp) = (0.2, 0.1);
        let noise = NoiseModel { sigma_p: sp, odometry_sigma_position: so, odometry_sigma_yaw: 0.05 };
        let odometry = [Pose::new([1.0, 0.0, 0.0], 0.0)];
        let detections = vec![vec![det(2.1)], vec![det(0.95)]];
        let weights = WeightMatrix { weights: vec![vec![vec![1.0]], vec![vec![1.0]]] };
        let problem = GeometryProblem { weights: &weights, detections: &detections, odometry: &odometry, noise };
        let init = [Pose::new([0.0; 3], 0.0), Pose::new([0.7, 0.0, 0.0], 0.0)];
        let res = maximize_geometry(&problem, &init, &[[1.5, 0.0, 0.0]]).unwrap();
        // residuals (p1 - 1)/so, (l - 2.1)/sp, (l - p1 - 0.95)/sp; zero gradient gives
        // l = (3.05 + p1)/2 and p1 (a + b/2) = a + 0.575 b with a = so^-2, b = sp^-2
        let (a, b) = (1.0 / (so * so), 1.0 / (sp * sp));
        let p1 = (a + 0.575 * b) / (a + b / 2.0);
        let l = (3.05 + p1) / 2.0;
        assert!((res.poses[1].position[0] - p1).abs() < 1e-8);
        assert!((res.landmarks[0][0] - l).abs() < 1e-8);
        assert!(res.poses[1].yaw.abs() < 1e-8 && res.landmarks[0][1].abs() < 1e-8);
        assert_eq!(res.poses[0], init[0]);
        assert!(res.costs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn exact_data_recovers_truth() {
        let truth: Vec<Pose> = (0..6)
            .map(|t| {
                let a = t as f64 * 0.5;
                Pose::new([3.0 * a.cos(), 3.0 * a.sin(), 0.1 * t as f64], a + 1.3)
            })
            .collect();
        let lms = [[0.5, 0.2, 1.0], [4.0, 2.0, 0.0], [-2.0, 3.0, 0.5]];
        let odometry: Vec<Pose> = truth.windows(2).map(|w| w[0].relative(&w[1])).collect();
        let detections: Vec<Vec<Detection>> = truth
            .iter()
            .map(|p| {
                lms.iter()
                    .map(|l| Detection { position: p.to_local(*l), ..det(0.0) })
                    .collect()
            })
            .collect();
        let one_hot = (0..3).map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect()).collect::<Vec<_>>();
        let weights = WeightMatrix { weights: vec![one_hot; 6] };
        let noise = NoiseModel { sigma_p: 0.1, odometry_sigma_position: 0.1, odometry_sigma_yaw: 0.05 };
        let problem = GeometryProblem { weights: &weights, detections: &detections, odometry: &odometry, noise };
        let mut init: Vec<Pose> = truth.clone();
        for (k, p) in init.iter_mut().enumerate().skip(1) {
            *p = Pose::new(p.position.map(|v| v + 0.2 * (k as f64).sin()), p.yaw + 0.1);
        }
        let init_lms: Vec<[f64; 3]> = lms.iter().map(|l| l.map(|v| v - 0.3)).collect();
        let before = problem.cost(&init, &init_lms).unwrap();
        let res = maximize_geometry(&problem, &init, &init_lms).unwrap();
        assert!(*res.costs.last().unwrap() <= before);
        for (a, b) in res.poses.iter().zip(&truth) {
            assert!(a.position.iter().zip(&b.position).all(|(x, y)| (x - y).abs() < 1e-6));
            assert!(wrap_angle(a.yaw - b.yaw).abs() < 1e-6);
        }
        for (a, b) in res.landmarks.iter().zip(&lms) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6));
        }
    }
}
