use super::config::Block;
use super::model::{PosteriorBlocks, PredictedShape, PriorBlocks};
use crate::error::{Error, Result};
use crate::gradcore::{Tape, Var};
use crate::voxeldata::VoxelGrid;

/// KL of one diagonal block against a unit-variance Gaussian at `prior_mean`.
pub fn kl_block(mean: &[f64], std: &[f64], prior_mean: &[f64]) -> Result<f64> {
    if mean.len() != std.len() || mean.len() != prior_mean.len() {
        return Err(Error::shape(
            "kl_term",
            format!("block lengths {}, {}, {} differ", mean.len(), std.len(), prior_mean.len()),
        ));
    }
    Ok(mean
        .iter()
        .zip(std)
        .zip(prior_mean)
        .map(|((m, s), p)| -s.ln() + (s * s + (m - p) * (m - p)) / 2.0 - 0.5)
        .sum())
}

/// Sum of [`kl_block`] over the four blocks.
pub fn kl_term(post: &PosteriorBlocks, prior: &PriorBlocks) -> Result<f64> {
    Block::ALL
        .iter()
        .map(|&b| kl_block(post.mean(b), post.std(b), prior.mean(b)))
        .sum()
}

/// Stretched reconstruction loss summed over voxels: `-2 ln p + ln(1-p)` on
/// occupied targets, `ln p - 2 ln(1-p)` on empty ones.
pub fn recon_loss_lrc(pred: &PredictedShape, target: &VoxelGrid) -> Result<f64> {
    if pred.probs.len() != target.cells().len() {
        return Err(Error::shape(
            "recon_loss_lrc",
            format!("{} probabilities for {} voxels", pred.probs.len(), target.cells().len()),
        ));
    }
    Ok(pred
        .probs
        .iter()
        .zip(target.cells())
        .map(|(&p, &t)| {
            let (a, b) = stretch_coefficients(t);
            a * p.ln() + b * (1.0 - p).ln()
        })
        .sum())
}

fn stretch_coefficients(target: u8) -> (f64, f64) {
    if target == 1 {
        (-2.0, 1.0)
    } else {
        (1.0, -2.0)
    }
}

/// Pairwise hinge `(d - delta)^2` over unordered pairs closer than `delta`.
pub fn prior_reg_lrg(means: &[Vec<f64>], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("separation threshold must be positive, got {delta}")));
    }
    let mut total = 0.0;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            if means[i].len() != means[j].len() {
                return Err(Error::shape("prior_reg_lrg", "prior means differ in length"));
            }
            let d = means[i].iter().zip(&means[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < delta {
                total += (d - delta) * (d - delta);
            }
        }
    }
    Ok(total)
}

/// Differentiable [`kl_block`] with the posterior given as `(mean, log_std)`.
pub(crate) fn kl_on(tape: &mut Tape<'_>, mean: Var, log_std: Var, prior_mean: Var) -> Result<Var> {
    let diff = tape.sub(mean, prior_mean)?;
    let sq = tape.square(diff);
    let two_log = tape.scale(log_std, 2.0);
    let var = tape.exp(two_log);
    let quad = tape.add(var, sq)?;
    let half = tape.scale(quad, 0.5);
    let t = tape.sub(half, log_std)?;
    let t = tape.add_scalar(t, -0.5);
    Ok(tape.sum(t))
}

/// Differentiable [`recon_loss_lrc`] on decoder logits with stretched targets
/// `t' = 3t - 1`. The value matches the clamped-probability form; the gradient
/// is the logit-domain `sigmoid(x) - t'`, projected at the clamp.
pub(crate) fn recon_on(tape: &mut Tape<'_>, logits: Var, target: &VoxelGrid, eps: f64) -> Result<Var> {
    let targets = target.cells().iter().map(|&t| 3.0 * f64::from(t) - 1.0).collect();
    tape.logit_cross_entropy(logits, targets, ((1.0 - eps) / eps).ln())
}

/// Differentiable [`prior_reg_lrg`]; `None` when there are fewer than two means.
pub(crate) fn reg_on(tape: &mut Tape<'_>, means: &[Var], delta: f64) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let diff = tape.sub(means[i], means[j])?;
            let d = tape.norm(diff);
            let gap = tape.add_scalar(d, -delta);
            let hinge = tape.clamp(gap, f64::NEG_INFINITY, 0.0);
            terms.push(tape.square(hinge));
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let stacked = tape.concat(&terms);
    Ok(Some(tape.sum(stacked)))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::gradcore::{ParamStore, Tensor};

    /// Monte-Carlo KL: mean over draws of log q(z) - log p(z).
    fn kl_monte_carlo(mean: &[f64], std: &[f64], prior: &[f64], n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..n {
            let mut log_ratio = 0.0;
            for j in 0..mean.len() {
                let e: f64 = rng.sample(StandardNormal);
                let z = mean[j] + std[j] * e;
                let log_q = -std[j].ln() - 0.5 * e * e;
                let log_p = -0.5 * (z - prior[j]).powi(2);
                log_ratio += log_q - log_p;
            }
            acc += log_ratio;
        }
        acc / n as f64
    }

    #[test]
    fn kl_zero_iff_matched_unit() {
        assert_eq!(kl_block(&[0.3, -1.0], &[1.0, 1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert!(kl_block(&[0.3], &[0.9], &[0.3]).unwrap() > 0.0);
        assert!(kl_block(&[0.3], &[1.0], &[0.2]).unwrap() > 0.0);
        assert!(kl_block(&[0.3], &[1.0, 1.0], &[0.2]).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let exact = kl_block(&[1.0], &[1.0], &[0.0]).unwrap();
        assert!((exact - kl_monte_carlo(&[1.0], &[1.0], &[0.0], 1_000_000, 1)).abs() < 0.01);
        let exact = kl_block(&[0.4], &[0.5], &[0.4]).unwrap();
        assert!((exact - kl_monte_carlo(&[0.4], &[0.5], &[0.4], 1_000_000, 2)).abs() < 0.01);
    }

    /// Per-voxel loss read off a uniform 4^3 grid.
    fn one_voxel(p: f64, occupied: bool) -> f64 {
        let mut g = VoxelGrid::empty(4).unwrap();
        if occupied {
            for x in 0..4 {
                for y in 0..4 {
                    for z in 0..4 {
                        g.set(x, y, z, true);
                    }
                }
            }
        }
        let pred = PredictedShape { resolution: 4, probs: vec![p; 64] };
        recon_loss_lrc(&pred, &g).unwrap() / 64.0
    }

    #[test]
    fn recon_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((one_voxel(0.5, true) - ln2).abs() < 1e-12);
        assert!((one_voxel(0.5, false) - ln2).abs() < 1e-12);
        // -2 ln 0.9 + ln 0.1
        assert!((one_voxel(0.9, true) - (-2.0919)).abs() < 1e-4);
    }

    #[test]
    fn reg_hand_sums() {
        let d = 3.0;
        assert_eq!(prior_reg_lrg(&[vec![0.0, 0.0], vec![3.0, 0.0]], d).unwrap(), 0.0);
        let two = prior_reg_lrg(&[vec![0.0], vec![1.0]], d).unwrap();
        assert!((two - 4.0).abs() < 1e-12);
        // collinear 0, δ/2, 2δ: pair distances δ/2, 2δ, 3δ/2
        let means = [vec![0.0], vec![d / 2.0], vec![2.0 * d]];
        assert!((prior_reg_lrg(&means, d).unwrap() - d * d / 4.0).abs() < 1e-12);
        assert!(prior_reg_lrg(&means, 0.0).is_err());
    }

    #[test]
    fn tape_losses_match_plain_versions() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let (m, s, p) = (vec![0.2, -1.0, 0.7], vec![0.5, 1.3, 0.9], vec![0.0, 0.5, 0.7]);
        let mv = tape.input(Tensor::vector(m.clone()));
        let lv = tape.input(Tensor::vector(s.iter().map(|v: &f64| v.ln()).collect()));
        let pv = tape.input(Tensor::vector(p.clone()));
        let k = kl_on(&mut tape, mv, lv, pv).unwrap();
        assert!((tape.value(k).data()[0] - kl_block(&m, &s, &p).unwrap()).abs() < 1e-12);

        let mut g = VoxelGrid::empty(4).unwrap();
        g.set(1, 2, 3, true);
        g.set(0, 0, 0, true);
        // the last logits saturate past the clamp
        let logits: Vec<f64> = (0..64).map(|i| -30.0 + 60.0 * (i as f64 / 63.0)).collect();
        let eps = 1e-6;
        let probs = logits.iter().map(|x| (1.0 / (1.0 + (-x).exp())).clamp(eps, 1.0 - eps)).collect();
        let lv = tape.input(Tensor::vector(logits));
        let r = recon_on(&mut tape, lv, &g, eps).unwrap();
        let plain = recon_loss_lrc(&PredictedShape { resolution: 4, probs }, &g).unwrap();
        assert!((tape.value(r).data()[0] - plain).abs() < 1e-6 * plain.abs());

        let means = [vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 0.0]];
        let vars: Vec<Var> = means.iter().map(|v| tape.input(Tensor::vector(v.clone()))).collect();
        let reg = reg_on(&mut tape, &vars, 4.0).unwrap().unwrap();
        assert!((tape.value(reg).data()[0] - prior_reg_lrg(&means, 4.0).unwrap()).abs() < 1e-12);
        assert!(reg_on(&mut tape, &vars[..1], 4.0).unwrap().is_none());
    }
}
