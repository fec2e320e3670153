//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset
//! (`cargo test --test acceptance -- 1 3 8`).
//!
//! Every numeric reference is recomputed here from first principles rather
//! than taken from the library: finite differences, Monte Carlo, brute-force
//! association enumeration, voxel IoU and prior distances.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voxsem::gradcore::{Mode, Tape, Tensor};
use voxsem::inference::{classify_view, evaluate, mle_classify, retrieve, EncodedFeature, MleMode, PriorTable};
use voxsem::seeds::derive_seed;
use voxsem::slam::{
    em_run, simulate_world, synthetic_prior_table, weights_full, weights_reduced, DetectionEvidence, Pose,
    SlamConfig, WeightInputs, WeightMatrix, World, DEFAULT_ENUMERATION_CAP,
};
use voxsem::store::{em_csv, history_csv, metrics_csv, weights_csv};
use voxsem::vae::fixtures::{tiny_model, toy_samples, TINY_RESOLUTION};
use voxsem::vae::{composite_loss, kl_block, loss_and_gradient, train_step, train_with, ModelCheckpoint, TrainConfig};
use voxsem::voxeldata::{build_dataset, DataConfig, Dataset, Sample, SplitMode, VoxelGrid};

const SEED: u64 = 1;

/// Metric CSVs of one run, compared byte for byte by the determinism check.
type Artifacts = Vec<(String, String)>;

struct Outcome {
    passed: bool,
    detail: String,
    artifacts: Artifacts,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail, artifacts: Vec::new() }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn seconds(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// Independent reference formulas
// ---------------------------------------------------------------------------

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `log N(x; mu, I)`.
fn unit_gaussian_logpdf(x: &[f64], mu: &[f64]) -> f64 {
    -0.5 * x.len() as f64 * (2.0 * PI).ln() - 0.5 * sq_dist(x, mu)
}

/// `KL(N(mean, diag std^2) || N(prior, I))` written out per coordinate.
fn kl_reference(mean: &[f64], std: &[f64], prior: &[f64]) -> f64 {
    mean.iter()
        .zip(std)
        .zip(prior)
        .map(|((m, s), p)| 0.5 * (s * s + (m - p) * (m - p) - 1.0) - s.ln())
        .sum()
}

/// `log [ p(mean | prior) * exp(H(q)) / exp(½ Σ std²) ]`.
fn factored_log(mean: &[f64], std: &[f64], prior: &[f64]) -> f64 {
    let entropy: f64 = std.iter().map(|s| 0.5 * (2.0 * PI * std::f64::consts::E * s * s).ln()).sum();
    let half_var: f64 = std.iter().map(|s| 0.5 * s * s).sum();
    unit_gaussian_logpdf(mean, prior) + entropy - half_var
}

/// Monte Carlo `E_q[log q(z) - log p(z)]` with `z = mean + std * eta`.
fn kl_monte_carlo(mean: &[f64], std: &[f64], prior: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let log_norm: f64 = std.iter().map(|s| s.ln()).sum();
    let mut acc = 0.0;
    for _ in 0..samples {
        let mut log_ratio = -log_norm;
        for d in 0..mean.len() {
            let eta: f64 = rng.sample(StandardNormal);
            let z = mean[d] + std[d] * eta;
            log_ratio += -0.5 * eta * eta + 0.5 * (z - prior[d]) * (z - prior[d]);
        }
        acc += log_ratio;
    }
    acc / samples as f64
}

fn iou(a: &VoxelGrid, b: &VoxelGrid) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.cells().iter().zip(b.cells()) {
        inter += usize::from(*x != 0 && *y != 0);
        union += usize::from(*x != 0 || *y != 0);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every map of `k` detections onto `m` landmarks, optionally one-to-one.
fn all_associations(k: usize, m: usize, injective: bool) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|a: Vec<usize>| {
                (0..m).filter(|j| !injective || !a.contains(j)).map(|j| [&a[..], &[j]].concat()).collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

/// Weight oracle from the complete κ product: brute-force association sum of
/// `N(s^p; T_t^{-1} x_j, σ_p²) * a * κ_e * κ_vt * exp(-KL(q_C || p(.|l_j)))`.
fn weights_oracle(
    world: &World,
    table: &PriorTable,
    sigma_p: f64,
    injective: bool,
    evidence: &[Vec<DetectionEvidence>],
) -> Vec<Vec<Vec<f64>>> {
    let m = world.landmarks.len();
    world
        .detections
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let pose: &Pose = &world.poses[t];
            let score: Vec<Vec<f64>> = frame
                .iter()
                .enumerate()
                .map(|(i, det)| {
                    (0..m)
                        .map(|j| {
                            let lm = &world.landmarks[j];
                            let predicted = pose.to_local(lm.position);
                            let pos = -1.5 * (2.0 * PI * sigma_p * sigma_p).ln()
                                - sq_dist(&det.position, &predicted) / (2.0 * sigma_p * sigma_p);
                            let e = &evidence[t][i];
                            let kl = kl_reference(&det.feature.mean, &det.feature.std, &table.joint_mean(lm.label));
                            pos + e.log_a + e.log_kappa_e + e.log_kappa_kl_vt - kl
                        })
                        .collect()
                })
                .collect();
            let assoc = all_associations(frame.len(), m, injective);
            let logp: Vec<f64> = assoc.iter().map(|a| a.iter().enumerate().map(|(i, &j)| score[i][j]).sum()).collect();
            let total = log_sum_exp(&logp);
            let mut w = vec![vec![0.0; m]; frame.len()];
            for (a, lp) in assoc.iter().zip(&logp) {
                for (i, &j) in a.iter().enumerate() {
                    w[i][j] += (lp - total).exp();
                }
            }
            w
        })
        .collect()
}

fn max_difference(a: &WeightMatrix, b: &[Vec<Vec<f64>>]) -> f64 {
    let mut worst = 0.0f64;
    for (fa, fb) in a.weights.iter().zip(b) {
        for (ra, rb) in fa.iter().zip(fb) {
            for (x, y) in ra.iter().zip(rb) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

fn max_row_deviation(w: &WeightMatrix) -> f64 {
    w.weights.iter().flatten().map(|row| (row.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
}

fn position_rmse(estimate: &[Pose], truth: &[Pose]) -> f64 {
    let sum: f64 = estimate.iter().zip(truth).map(|(a, b)| sq_dist(&a.position, &b.position)).sum();
    (sum / truth.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_SEED: u64 = 5;

/// Ridders' extrapolated central difference of `f` at offset 0.
fn numeric_derivative(mut f: impl FnMut(f64) -> f64, h0: f64) -> f64 {
    const SHRINK: f64 = 2.0;
    let c2 = SHRINK * SHRINK;
    let mut h = h0;
    let mut prev = vec![(f(h) - f(-h)) / (2.0 * h)];
    let (mut best, mut err) = (prev[0], f64::INFINITY);
    for _ in 1..12 {
        h /= SHRINK;
        let mut row = vec![(f(h) - f(-h)) / (2.0 * h)];
        let mut fac = c2;
        for j in 1..=prev.len() {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let e = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if e <= err {
                err = e;
                best = v;
            }
            row.push(v);
        }
        let diverging = (row[row.len() - 1] - prev[prev.len() - 1]).abs() >= 2.0 * err;
        prev = row;
        if diverging {
            break;
        }
    }
    best
}

fn gradient_fidelity() -> Outcome {
    let (result, elapsed) = timed(|| {
        let model = tiny_model(GRAD_SEED).unwrap();
        let samples = toy_samples(TINY_RESOLUTION, 2, &model.vocab);
        let batch: Vec<&Sample> = samples.iter().collect();
        let step_seed = GRAD_SEED + 2;
        let loss_of = |m: &ModelCheckpoint| {
            let mut tape = Tape::new(&m.params);
            let (loss, _) = composite_loss(m, &mut tape, &batch, step_seed, Mode::Train).unwrap();
            tape.value(loss).data()[0]
        };
        let analytic = {
            let mut tape = Tape::new(&model.params);
            let (loss, _) = composite_loss(&model, &mut tape, &batch, step_seed, Mode::Train).unwrap();
            tape.backward(loss).unwrap()
        };
        let mut work = model.clone();
        let (mut worst, mut checked) = (0.0f64, 0usize);
        let ids: Vec<_> = model.params.ids().collect();
        for id in ids {
            let base = model.params.value(id).clone();
            for i in 0..base.len() {
                let numeric = numeric_derivative(
                    |offset| {
                        let mut data = base.data().to_vec();
                        data[i] += offset;
                        work.params.set_value(id, Tensor::new(base.shape().to_vec(), data).unwrap()).unwrap();
                        loss_of(&work)
                    },
                    1e-3,
                );
                work.params.set_value(id, base.clone()).unwrap();
                let a = analytic.get(id).data()[i];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
                checked += 1;
            }
        }
        (worst, checked)
    });
    let (worst, checked) = result;
    Outcome::new(
        worst < GRAD_TOLERANCE && elapsed < Duration::from_secs(60),
        format!("max relative error {worst:.2e} over {checked} parameters (< {GRAD_TOLERANCE:e}), {}", seconds(elapsed)),
    )
}

fn kl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[2]));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = rng.random_range(1..=8);
        let prior: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mean: Vec<f64> = prior.iter().map(|p| p + rng.random_range(-0.5..0.5)).collect();
        let std: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let closed = kl_block(&mean, &std, &prior).unwrap();
        let mc = kl_monte_carlo(&mean, &std, &prior, 1_000_000, &mut rng);
        worst = worst.max((closed - mc).abs());
    }
    Outcome::new(worst < 0.01, format!("max |closed form - Monte Carlo| {worst:.2e} on 20 posteriors (< 0.01)"))
}

fn kl_identity() -> Outcome {
    let (worst, elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[3]));
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let dim = rng.random_range(1..=16);
            let prior: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mean: Vec<f64> = prior.iter().map(|p| p + rng.random_range(-2.0..2.0)).collect();
            let std: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..2.0)).collect();
            let direct = -kl_block(&mean, &std, &prior).unwrap();
            // relative error of exp(direct) against exp(factored)
            worst = worst.max((direct - factored_log(&mean, &std, &prior)).exp_m1().abs());
        }
        worst
    });
    Outcome::new(
        worst < 1e-9 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e} on 100 posteriors (< 1e-9), {}", seconds(elapsed)),
    )
}

struct WeightStats {
    full_vs_reduced: f64,
    full_vs_oracle: f64,
    row_deviation: f64,
    artifacts: Artifacts,
}

/// 100 random worlds with at most 3 detections per keyframe, 3 landmarks and
/// 3 keyframes, each with random κ_e, κ_vt and `a` per detection.
fn weight_instances() -> WeightStats {
    let table = synthetic_prior_table(3, 2, (3, 3), 2.0, derive_seed(SEED, &[4])).unwrap();
    let mut stats = WeightStats { full_vs_reduced: 0.0, full_vs_oracle: 0.0, row_deviation: 0.0, artifacts: Vec::new() };
    let mut csv = String::new();
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[4, k]));
        let config = SlamConfig {
            landmarks: rng.random_range(1..=3),
            keyframes: rng.random_range(2..=3),
            sensor_range: rng.random_range(4.0..50.0),
            sigma_p: rng.random_range(0.1..1.0),
            injective: rng.random_bool(0.5),
            ..SlamConfig::default()
        };
        let world = simulate_world(&config, &table, rng.random()).unwrap();
        assert!(world.detections.iter().all(|f| f.len() <= 3), "more than 3 detections in a keyframe");
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
        let injective = config.injective && world.detections.iter().all(|d| d.len() <= config.landmarks);
        let inputs = WeightInputs {
            detections: &world.detections,
            poses: &world.poses,
            landmarks: &world.landmarks,
            table: &table,
            noise: config.noise_model(),
            injective,
            cap: DEFAULT_ENUMERATION_CAP,
        };
        let reduced = weights_reduced(&inputs).unwrap();
        let full = weights_full(&inputs, &evidence).unwrap();
        let oracle = weights_oracle(&world, &table, config.sigma_p, injective, &evidence);
        stats.full_vs_reduced = stats.full_vs_reduced.max(max_difference(&reduced, &full.weights));
        stats.full_vs_oracle = stats.full_vs_oracle.max(max_difference(&full, &oracle));
        stats.row_deviation = stats.row_deviation.max(max_row_deviation(&reduced)).max(max_row_deviation(&full));
        csv.push_str(&format!("# instance {k}\n"));
        csv.push_str(&weights_csv(&reduced, Some(&full)));
    }
    stats.artifacts.push(("weights.csv".into(), csv));
    stats
}

fn weight_equivalence(stats: &WeightStats, elapsed: Duration) -> Outcome {
    Outcome {
        passed: stats.full_vs_reduced < 1e-9 && stats.full_vs_oracle < 1e-9 && elapsed < Duration::from_secs(30),
        detail: format!(
            "max |full - reduced| {:.2e}, max |full - brute force| {:.2e} on 100 instances (< 1e-9), {}",
            stats.full_vs_reduced,
            stats.full_vs_oracle,
            seconds(elapsed)
        ),
        artifacts: stats.artifacts.clone(),
    }
}

fn mle_reduction() -> Outcome {
    let mut agree = 0usize;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, &[5, k]));
        let (classes, instances) = (rng.random_range(2..=5), rng.random_range(1..=4));
        let (dc, di) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let point = |rng: &mut ChaCha8Rng, d: usize| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect::<Vec<f64>>();
        let class_means: Vec<Vec<f64>> = (0..classes).map(|_| point(&mut rng, dc)).collect();
        let instance_means: Vec<Vec<f64>> = (0..classes * instances).map(|_| point(&mut rng, di)).collect();
        let table = PriorTable::new(classes, instances, class_means, instance_means).unwrap();
        let labels = classes * instances;
        let mean: Vec<f64> = if k % 2 == 0 {
            let target = table.joint_mean(rng.random_range(0..labels));
            target.iter().map(|m| m + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect()
        } else {
            point(&mut rng, dc + di)
        };
        let std: Vec<f64> = (0..dc + di).map(|_| rng.random_range(0.05..2.0)).collect();
        let (log_kappa_e, log_kappa_vt) = (rng.random_range(-3000.0..0.0), rng.random_range(-30.0..0.0));
        let argmax = |score: &dyn Fn(usize) -> f64| {
            (0..labels).fold((0, f64::NEG_INFINITY), |best, l| if score(l) > best.1 { (l, score(l)) } else { best }).0
        };
        let full = argmax(&|l| log_kappa_e + log_kappa_vt - kl_reference(&mean, &std, &table.joint_mean(l)));
        let density = argmax(&|l| unit_gaussian_logpdf(&mean, &table.joint_mean(l)));
        let feature = EncodedFeature { mean, std };
        let c = mle_classify(&table, &feature, MleMode::ClassAndInstance).unwrap();
        let library = c.class * instances + c.instance.unwrap();
        agree += usize::from(full == density && density == library);
    }
    Outcome::new(agree == 100, format!("{agree}/100 probes agree on full κ, prior density and classifier argmax"))
}

fn weight_normalization(stats: &WeightStats) -> Outcome {
    Outcome::new(
        stats.row_deviation < 1e-12,
        format!("max |Σ_j w_ij - 1| {:.2e} over both paths (< 1e-12)", stats.row_deviation),
    )
}

/// Relative slack allowed between consecutive EM costs for roundoff.
const EM_COST_SLACK: f64 = 1e-9;

fn em_worlds() -> Outcome {
    let config = SlamConfig { landmarks: 5, keyframes: 20, sigma_p: 0.1, sigma_f: 0.5, ..SlamConfig::default() };
    let (result, elapsed) = timed(|| {
        let mut artifacts = Vec::new();
        let (mut monotone, mut worst_ratio) = (true, 0.0f64);
        let (mut correct, mut total) = (0usize, 0usize);
        for k in 0..10u64 {
            let table = synthetic_prior_table(4, 8, (8, 8), 4.0, derive_seed(SEED, &[7, k, 0])).unwrap();
            let world = simulate_world(&config, &table, derive_seed(SEED, &[7, k, 1])).unwrap();
            let res = em_run(&world, &table, &config, derive_seed(SEED, &[7, k, 2])).unwrap();
            monotone &= res.costs.windows(2).all(|w| w[1] <= w[0] + EM_COST_SLACK * w[0].abs().max(1.0));
            let ratio = position_rmse(&res.poses, &world.poses) / position_rmse(&world.odometry_trajectory(), &world.poses);
            worst_ratio = worst_ratio.max(ratio);
            correct += res.landmarks.iter().zip(&world.landmarks).filter(|(a, b)| a.label == b.label).count();
            total += world.landmarks.len();
            for (name, csv) in em_csv(&world, &res) {
                artifacts.push((format!("world{k}/{name}"), csv));
            }
        }
        (monotone, worst_ratio, correct as f64 / total as f64, artifacts)
    });
    let (monotone, worst_ratio, accuracy, artifacts) = result;
    Outcome {
        passed: monotone && worst_ratio < 0.5 && accuracy >= 0.9 && elapsed < Duration::from_secs(300),
        detail: format!(
            "cost non-increasing: {monotone}, worst pose/odometry RMSE ratio {worst_ratio:.3} (< 0.5), \
             label accuracy {accuracy:.3} (>= 0.9), {}",
            seconds(elapsed)
        ),
        artifacts,
    }
}

fn desk_data() -> DataConfig {
    DataConfig {
        classes: 4,
        instances: 8,
        viewpoints: 12,
        resolution: 16,
        split_mode: SplitMode::View,
        ..DataConfig::default()
    }
}

/// Training configuration for the desk-scale run.
fn desk_training() -> TrainConfig {
    let mut cfg = TrainConfig { epochs: 40, batch_size: 4, eps: 1e-3, seed: SEED, ..TrainConfig::default() };
    cfg.delta[0] = 4.0;
    cfg
}

/// Tolerance on epoch-over-epoch loss increases early in training.
const EARLY_DESCENT_TOLERANCE: f64 = 1e-6;

struct Trained {
    dataset: Dataset,
    model: ModelCheckpoint,
    elapsed: Duration,
}

fn train_desk() -> Trained {
    let dataset = build_dataset(&desk_data(), SEED).unwrap();
    let (model, elapsed) = timed(|| train_with(&dataset, &desk_training(), |_, _| {}).unwrap());
    Trained { dataset, model, elapsed }
}

fn end_to_end(run: &Trained) -> Outcome {
    let table = PriorTable::from_model(&run.model).unwrap();
    let test = run.dataset.test();
    let held_out_views: BTreeSet<_> = test.iter().map(|s| (s.label.instance_id, s.label.viewpoint_id)).collect();
    let train_views: BTreeSet<_> = run.dataset.train().iter().map(|s| (s.label.instance_id, s.label.viewpoint_id)).collect();
    let disjoint = held_out_views.is_disjoint(&train_views);

    let mut correct = 0usize;
    let mut iou_sum = 0.0;
    for s in &test {
        let c = classify_view(&run.model, &table, &s.view, MleMode::ClassAndInstance).unwrap();
        correct += usize::from(c.class == s.label.class_id);
        iou_sum += iou(&retrieve(&run.model, &s.view).unwrap(), &s.full);
    }
    let accuracy = correct as f64 / test.len() as f64;
    let mean_iou = iou_sum / test.len() as f64;

    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    for a in 0..table.len() {
        for b in a + 1..table.len() {
            let d = sq_dist(&table.joint_mean(a), &table.joint_mean(b)).sqrt();
            let bucket = if table.class_of(a) == table.class_of(b) { &mut intra } else { &mut inter };
            bucket.0 += d;
            bucket.1 += 1;
        }
    }
    let (intra, inter) = (intra.0 / intra.1 as f64, inter.0 / inter.1 as f64);

    let report = evaluate(&run.model, &run.dataset, MleMode::ClassAndInstance).unwrap();
    let mut artifacts: Artifacts = metrics_csv(&report).into_iter().map(|(n, c)| (n.to_string(), c)).collect();
    artifacts.push(("loss_history.csv".into(), history_csv(&run.model.history)));

    Outcome {
        passed: disjoint
            && run.elapsed <= Duration::from_secs(600)
            && accuracy >= 0.85
            && mean_iou >= 0.5
            && intra < inter,
        detail: format!(
            "held-out views disjoint: {disjoint}, {} test views, accuracy {accuracy:.3} (>= 0.85), \
             retrieval IoU {mean_iou:.3} (>= 0.5), prior distance intra {intra:.2} < inter {inter:.2}, training {}",
            test.len(),
            seconds(run.elapsed)
        ),
        artifacts,
    }
}

fn early_descent(run: &Trained) -> (bool, String) {
    let totals: Vec<f64> = run.model.history.iter().take(10).map(|r| r.total).collect();
    let ok = totals.len() == 10 && totals.windows(2).all(|w| w[1] <= w[0] + EARLY_DESCENT_TOLERANCE);
    (ok, format!("epoch losses {}", totals.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>().join(" ")))
}

fn loss_descent() -> Outcome {
    let dataset = build_dataset(&DataConfig { classes: 2, instances: 2, ..desk_data() }, derive_seed(SEED, &[9])).unwrap();
    let mut cfg = TrainConfig { seed: SEED, ..desk_training() };
    cfg.arch.dropout = 0.0;
    cfg.adam.lr = 1e-4;
    let mut model = ModelCheckpoint::new(cfg, dataset.vocab, dataset.resolution).unwrap();
    let train = dataset.train();
    let batch: Vec<&Sample> = train.iter().step_by(train.len() / 4).take(4).copied().collect();
    // a fixed step seed keeps the reparameterization noise identical across steps
    let mut losses: Vec<f64> = (0..50).map(|_| train_step(&mut model, &batch, 3).unwrap().total).collect();
    losses.push(loss_and_gradient(&model, &batch, 3, Mode::Train).unwrap().0.total);
    let worst_rise = losses.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        batch.len() == 4 && worst_rise <= 1e-6,
        format!(
            "loss {:.3} -> {:.3} over 50 steps, largest step-to-step change {worst_rise:.3e} (<= 1e-6)",
            losses[0],
            losses[50]
        ),
    )
}

fn class_separation(run: &Trained) -> Outcome {
    let table = PriorTable::from_model(&run.model).unwrap();
    let mut closest = f64::INFINITY;
    for a in 0..table.classes {
        for b in a + 1..table.classes {
            closest = closest.min(sq_dist(&table.class_means[a], &table.class_means[b]).sqrt());
        }
    }
    Outcome::new(closest >= 3.9, format!("closest class-prior pair {closest:.3} apart (>= 3.9) with δ^c = 4"))
}

fn determinism(first: &[(usize, Artifacts)], second: &[(usize, Artifacts)]) -> Outcome {
    let mut mismatched = Vec::new();
    let mut files = 0usize;
    for ((n, a), (_, b)) in first.iter().zip(second) {
        files += a.len();
        if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0 || x.1.as_bytes() != y.1.as_bytes()) {
            mismatched.push(*n);
        }
    }
    Outcome::new(
        mismatched.is_empty() && !first.is_empty(),
        format!(
            "{files} CSVs from criteria {:?} compared across two runs, mismatches in {mismatched:?}",
            first.iter().map(|(n, _)| *n).collect::<Vec<_>>()
        ),
    )
}

fn report(n: usize, name: &str, outcome: &Outcome) {
    let verdict = if outcome.passed { "PASS" } else { "FAIL" };
    println!("criterion {n:>2} {verdict} {name}: {}", outcome.detail);
}

fn main() {
    let wanted: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failed = Vec::new();
    let mut record = |n: usize, name: &str, outcome: &Outcome| {
        report(n, name, outcome);
        if !outcome.passed {
            failed.push(n);
        }
    };
    let mut first_run: Vec<(usize, Artifacts)> = Vec::new();

    if want(1) {
        record(1, "gradient fidelity", &gradient_fidelity());
    }
    if want(2) {
        record(2, "KL closed form vs Monte Carlo", &kl_oracle());
    }
    if want(3) {
        record(3, "exp(-KL) factorization", &kl_identity());
    }
    if want(4) || want(6) || want(11) {
        let (stats, elapsed) = timed(weight_instances);
        if want(4) {
            record(4, "full vs reduced EM weights", &weight_equivalence(&stats, elapsed));
        }
        if want(6) {
            record(6, "EM weight normalization", &weight_normalization(&stats));
        }
        first_run.push((4, stats.artifacts));
    }
    if want(5) {
        record(5, "MLE reduction", &mle_reduction());
    }
    if want(7) || want(11) {
        let outcome = em_worlds();
        if want(7) {
            record(7, "EM monotonicity and gain", &outcome);
        }
        first_run.push((7, outcome.artifacts));
    }
    if want(8) || want(10) || want(11) {
        let run = train_desk();
        let outcome = end_to_end(&run);
        if want(8) {
            record(8, "end-to-end learning", &outcome);
            let (ok, detail) = early_descent(&run);
            println!("  note: loss decreases over the first 10 epochs: {ok} ({detail})");
        }
        if want(10) {
            record(10, "class prior separation", &class_separation(&run));
        }
        first_run.push((8, outcome.artifacts));
    }
    if want(9) {
        record(9, "full-batch loss descent", &loss_descent());
    }
    if want(11) {
        let second_run = vec![
            (4, weight_instances().artifacts),
            (7, em_worlds().artifacts),
            (8, end_to_end(&train_desk()).artifacts),
        ];
        record(11, "determinism", &determinism(&first_run, &second_run));
    }

    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
