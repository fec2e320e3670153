use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{Block, TrainConfig};
use super::loss::{kl_on, recon_on, reg_on};
use super::model::{LossReport, ModelCheckpoint};
use crate::error::{Error, Result};
use crate::gradcore::{GradientMap, Mode, Tape, Var};
use crate::seeds::derive_seed;
use crate::voxeldata::{Dataset, LabelTuple, Sample};

/// Records `(KL, L^rc)` for one sample. `L^rc` is averaged over the
/// configured number of reparameterization draws.
pub(crate) fn sample_terms(
    model: &ModelCheckpoint,
    tape: &mut Tape<'_>,
    sample: &Sample,
    mode: Mode,
    seed: u64,
) -> Result<(Var, Var)> {
    let cfg = &model.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mean, log_std) = model.encode_on(tape, &sample.view, mode, &mut rng)?;

    let mut kls = Vec::with_capacity(4);
    for b in Block::ALL {
        let (o, d) = (cfg.offset(b), cfg.dim(b));
        let m = tape.slice(mean, o, d)?;
        let s = tape.slice(log_std, o, d)?;
        let p = model.prior_on(tape, b, &sample.label)?;
        kls.push(kl_on(tape, m, s, p)?);
    }
    let kl = tape.add_all(&kls)?;

    let std = tape.exp(log_std);
    let mut recons = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let eta: Vec<f64> = (0..cfg.latent_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let noise = tape.mul_const(std, eta)?;
        let z = tape.add(mean, noise)?;
        let logits = model.decode_logits_on(tape, z)?;
        recons.push(recon_on(tape, logits, &sample.full, model.config.eps)?);
    }
    let sum = tape.add_all(&recons)?;
    Ok((kl, tape.scale(sum, 1.0 / cfg.samples as f64)))
}

/// Every label value of `block`, holding the other components at zero.
fn block_labels(model: &ModelCheckpoint, block: Block) -> Vec<LabelTuple> {
    let v = &model.vocab;
    let base = LabelTuple { class_id: 0, instance_id: 0, viewpoint_id: 0, translation_id: 0 };
    match block {
        Block::Class => (0..v.classes).map(|c| LabelTuple { class_id: c, ..base }).collect(),
        Block::Instance => (0..v.classes)
            .flat_map(|c| (0..v.instances).map(move |i| LabelTuple { class_id: c, instance_id: i, ..base }))
            .collect(),
        Block::View => (0..v.viewpoints).map(|k| LabelTuple { viewpoint_id: k, ..base }).collect(),
        Block::Translation => (0..v.translations).map(|k| LabelTuple { translation_id: k, ..base }).collect(),
    }
}

/// Records `L^rg` summed over blocks, or `None` if no block has two labels.
pub(crate) fn reg_terms(model: &ModelCheckpoint, tape: &mut Tape<'_>) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    for b in Block::ALL {
        let means = block_labels(model, b)
            .iter()
            .map(|l| model.prior_on(tape, b, l))
            .collect::<Result<Vec<_>>>()?;
        if let Some(t) = reg_on(tape, &means, model.config.delta[b.index()])? {
            terms.push(t);
        }
    }
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(tape.add_all(&terms)?))
}

fn check_batch(batch: &[&Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("training batch is empty".into()));
    }
    Ok(())
}

/// The full objective on a single tape: batch mean of `KL + L^rc` plus
/// `lambda_rg * L^rg`. Sample `k` draws from `derive_seed(step_seed, [k])`.
pub fn composite_loss(
    model: &ModelCheckpoint,
    tape: &mut Tape<'_>,
    batch: &[&Sample],
    step_seed: u64,
    mode: Mode,
) -> Result<(Var, LossReport)> {
    check_batch(batch)?;
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut report = LossReport::default();
    for (k, s) in batch.iter().enumerate() {
        let (kl, rc) = sample_terms(model, tape, s, mode, derive_seed(step_seed, &[k as u64]))?;
        report.kl += tape.value(kl).data()[0];
        report.recon += tape.value(rc).data()[0];
        per_sample.push(tape.add(kl, rc)?);
    }
    let n = batch.len() as f64;
    report.kl /= n;
    report.recon /= n;
    let sum = tape.add_all(&per_sample)?;
    let mut total = tape.scale(sum, 1.0 / n);
    if let Some(reg) = reg_terms(model, tape)? {
        report.reg = tape.value(reg).data()[0];
        let weighted = tape.scale(reg, model.config.lambda_rg);
        total = tape.add(total, weighted)?;
    }
    report.total = tape.value(total).data()[0];
    Ok((total, report))
}

/// Loss and gradient of [`composite_loss`], with samples evaluated in
/// parallel and reduced in batch order.
pub fn loss_and_gradient(
    model: &ModelCheckpoint,
    batch: &[&Sample],
    step_seed: u64,
    mode: Mode,
) -> Result<(LossReport, GradientMap)> {
    check_batch(batch)?;
    let parts = batch
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut tape = Tape::new(&model.params);
            let (kl, rc) = sample_terms(model, &mut tape, s, mode, derive_seed(step_seed, &[k as u64]))?;
            let total = tape.add(kl, rc)?;
            let grads = tape.backward(total)?;
            Ok((tape.value(kl).data()[0], tape.value(rc).data()[0], grads))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = batch.len() as f64;
    let mut report = LossReport::default();
    let mut grads = GradientMap::zeros_like(&model.params);
    for (kl, rc, g) in &parts {
        report.kl += kl;
        report.recon += rc;
        grads.add_assign(g);
    }
    report.kl /= n;
    report.recon /= n;
    grads.scale(1.0 / n);

    let mut tape = Tape::new(&model.params);
    if let Some(reg) = reg_terms(model, &mut tape)? {
        report.reg = tape.value(reg).data()[0];
        let mut g = tape.backward(reg)?;
        g.scale(model.config.lambda_rg);
        grads.add_assign(&g);
    }
    report.total = report.kl + report.recon + model.config.lambda_rg * report.reg;
    Ok((report, grads))
}

/// One joint Adam update of encoder, decoder and prior parameters.
pub fn train_step(model: &mut ModelCheckpoint, batch: &[&Sample], step_seed: u64) -> Result<LossReport> {
    let (report, grads) = loss_and_gradient(model, batch, step_seed, Mode::Train)?;
    if !report.total.is_finite() || !grads.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite loss or gradient at step seed {step_seed} (loss {:?})",
            report
        )));
    }
    let adam = model.config.adam;
    model.params.adam_step(&grads, &adam)?;
    Ok(report)
}

/// Trains a fresh model on the dataset's training split.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<ModelCheckpoint> {
    train_with(dataset, config, |_, _| {})
}

/// [`train`] with a callback after every epoch receiving its mean loss.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossReport),
) -> Result<ModelCheckpoint> {
    let mut model = ModelCheckpoint::new(config.clone(), dataset.vocab.clone(), dataset.resolution)?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::InvalidArgument("dataset has no training samples".into()));
    }
    for s in &train {
        model.vocab.check(&s.label)?;
    }
    let seed = config.seed;
    for epoch in 0..config.epochs {
        let mut order = train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[20, epoch as u64])));
        let mut mean = LossReport::default();
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let r = train_step(&mut model, batch, derive_seed(seed, &[21, epoch as u64, step as u64]))?;
            let w = batch.len() as f64 / order.len() as f64;
            mean.kl += w * r.kl;
            mean.recon += w * r.recon;
            mean.reg += w * r.reg;
            mean.total += w * r.total;
        }
        model.history.push(mean);
        on_epoch(epoch, &mean);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::fixtures::{composite_grad_check, tiny_config, toy_samples};

    #[test]
    fn composite_gradient_matches_finite_differences() {
        for seed in [5, 11] {
            let report = composite_grad_check(seed, 1e-3).unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn parallel_gradient_equals_single_tape() {
        let (cfg, vocab) = tiny_config();
        let model = ModelCheckpoint::new(cfg, vocab.clone(), 8).unwrap();
        let samples = toy_samples(8, 3, &vocab);
        let batch: Vec<&Sample> = samples.iter().collect();
        let (report, grads) = loss_and_gradient(&model, &batch, 3, Mode::Train).unwrap();
        let mut tape = Tape::new(&model.params);
        let (loss, single) = composite_loss(&model, &mut tape, &batch, 3, Mode::Train).unwrap();
        let reference = tape.backward(loss).unwrap();
        assert!((report.total - single.total).abs() <= 1e-9 * single.total.abs().max(1.0));
        for id in model.params.ids() {
            for (a, b) in grads.get(id).data().iter().zip(reference.get(id).data()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{}", model.params.name(id));
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (mut cfg, vocab) = tiny_config();
        cfg.lambda_rg = 0.0;
        cfg.adam.lr = 0.0;
        let mut model = ModelCheckpoint::new(cfg, vocab.clone(), 8).unwrap();
        let before = model.params.clone();
        let samples = toy_samples(8, 1, &vocab);
        let report = train_step(&mut model, &[&samples[0]], 1).unwrap();
        assert!(report.total.is_finite());
        for id in before.ids() {
            assert_eq!(before.value(id), model.params.value(id));
        }
        assert!(train_step(&mut model, &[], 1).is_err());
    }

    #[test]
    fn one_step_makes_encoder_sensitive_to_a_voxel() {
        let (cfg, vocab) = tiny_config();
        let mut model = ModelCheckpoint::new(cfg, vocab.clone(), 8).unwrap();
        let mut samples = toy_samples(8, 2, &vocab);
        let mut flipped = samples[0].view.clone();
        flipped.set(3, 3, 3, !flipped.get(3, 3, 3));
        samples[1].view = flipped.clone();
        let batch: Vec<&Sample> = samples.iter().collect();
        train_step(&mut model, &batch, 0).unwrap();
        assert_ne!(model.encode(&samples[0].view).unwrap(), model.encode(&flipped).unwrap());
    }

    #[test]
    fn full_batch_descent() {
        let (mut cfg, vocab) = tiny_config();
        cfg.arch.dropout = 0.0;
        cfg.adam.lr = 1e-3;
        let mut model = ModelCheckpoint::new(cfg, vocab.clone(), 8).unwrap();
        let samples = toy_samples(8, 4, &vocab);
        let batch: Vec<&Sample> = samples.iter().collect();
        let first = train_step(&mut model, &batch, 11).unwrap().total;
        let mut last = first;
        for _ in 0..49 {
            last = train_step(&mut model, &batch, 11).unwrap().total;
        }
        assert!(last < first, "{first} -> {last}");
    }
}
