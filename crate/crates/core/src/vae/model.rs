use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{Block, TrainConfig};
use crate::error::{Error, Result};
use crate::gradcore::{init_layers, LayerKind, LayerSpec, Mode, ParamGroup, ParamStore, Tape, Tensor, Var};
use crate::seeds::derive_seed;
use crate::voxeldata::{LabelTuple, Vocab, VoxelGrid};

/// Diagonal Gaussian posterior per block; `std` is strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorBlocks {
    pub mean: [Vec<f64>; 4],
    pub std: [Vec<f64>; 4],
}

impl PosteriorBlocks {
    pub fn mean(&self, block: Block) -> &[f64] {
        &self.mean[block.index()]
    }

    pub fn std(&self, block: Block) -> &[f64] {
        &self.std[block.index()]
    }

    /// Means of all blocks in `(c, i, v, t)` order.
    pub fn mean_concat(&self) -> Vec<f64> {
        self.mean.concat()
    }

    pub fn std_concat(&self) -> Vec<f64> {
        self.std.concat()
    }
}

/// Prior means per block; covariance is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorBlocks {
    pub mean: [Vec<f64>; 4],
}

impl PriorBlocks {
    pub fn mean(&self, block: Block) -> &[f64] {
        &self.mean[block.index()]
    }
}

/// Per-voxel Bernoulli probabilities in `[eps, 1 - eps]`, row-major like [`VoxelGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedShape {
    pub resolution: usize,
    pub probs: Vec<f64>,
}

impl PredictedShape {
    /// Occupied where the probability is at least 0.5.
    pub fn threshold(&self) -> Result<VoxelGrid> {
        let cells = self.probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
        VoxelGrid::from_cells(self.resolution, cells)
    }
}

/// Loss components; `total = kl + recon + lambda_rg * reg`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub kl: f64,
    pub recon: f64,
    pub reg: f64,
    pub total: f64,
}

/// Trained (or freshly initialized) model with everything needed to use it.
#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub resolution: usize,
    pub params: ParamStore,
    /// Mean loss per completed epoch.
    pub history: Vec<LossReport>,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
    priors: [Vec<LayerSpec>; 4],
}

fn elu(name: &str) -> LayerSpec {
    LayerSpec::new(format!("{name}.act"), LayerKind::Elu)
}

fn dense(name: impl Into<String>, fan_in: usize, fan_out: usize) -> LayerSpec {
    LayerSpec::new(name, LayerKind::Dense { fan_in, fan_out })
}

impl ModelCheckpoint {
    /// Fresh model with Glorot-initialized weights drawn from `config.seed`.
    pub fn new(config: TrainConfig, vocab: Vocab, resolution: usize) -> Result<Self> {
        let mut model = Self::skeleton(config, vocab, resolution, ParamStore::new(), Vec::new())?;
        let seed = model.config.seed;
        let mut params = ParamStore::new();
        init_layers(&mut params, &model.encoder, ParamGroup::Encoder, derive_seed(seed, &[10]))?;
        init_layers(&mut params, &model.decoder, ParamGroup::Decoder, derive_seed(seed, &[11]))?;
        for b in Block::ALL {
            init_layers(&mut params, &model.priors[b.index()], ParamGroup::Prior, derive_seed(seed, &[12, b as u64]))?;
        }
        model.params = params;
        Ok(model)
    }

    /// Reassembles a model from stored parts, checking every parameter shape.
    pub fn from_parts(
        config: TrainConfig,
        vocab: Vocab,
        resolution: usize,
        params: ParamStore,
        history: Vec<LossReport>,
    ) -> Result<Self> {
        let fresh = Self::new(config.clone(), vocab.clone(), resolution)?;
        if fresh.params.len() != params.len() {
            return Err(Error::shape(
                "checkpoint",
                format!("expected {} parameter tensors, found {}", fresh.params.len(), params.len()),
            ));
        }
        for id in fresh.params.ids() {
            let name = fresh.params.name(id);
            let stored = params.value(params.require(name)?);
            let expected = fresh.params.value(id);
            if stored.shape() != expected.shape() {
                return Err(Error::shape(
                    name,
                    format!("stored shape {:?} does not match configured {:?}", stored.shape(), expected.shape()),
                ));
            }
        }
        Self::skeleton(config, vocab, resolution, params, history)
    }

    fn skeleton(
        config: TrainConfig,
        vocab: Vocab,
        resolution: usize,
        params: ParamStore,
        history: Vec<LossReport>,
    ) -> Result<Self> {
        config.validate()?;
        if vocab.classes == 0 || vocab.instances == 0 || vocab.viewpoints == 0 || vocab.translations == 0 {
            return Err(Error::Vocabulary(format!("every vocabulary must be non-empty, got {vocab:?}")));
        }
        let bottleneck = config.bottleneck(resolution)?;
        let arch = &config.arch;
        let latent = config.latent_dim();

        let mut encoder = Vec::new();
        let mut c_in = 1;
        for (k, &c) in arch.conv_channels.iter().enumerate() {
            let name = format!("enc.conv{k}");
            encoder.push(LayerSpec::new(
                &name,
                LayerKind::Conv3 { in_channels: c_in, out_channels: c, kernel: 3, stride: 2, padding: 1 },
            ));
            encoder.push(elu(&name));
            c_in = c;
        }
        let flat = c_in * bottleneck.pow(3);
        let mut width = flat;
        if arch.dense_hidden > 0 {
            encoder.push(dense("enc.hidden", flat, arch.dense_hidden));
            encoder.push(elu("enc.hidden"));
            encoder.push(LayerSpec::new("enc.hidden.drop", LayerKind::Dropout { rate: arch.dropout }));
            width = arch.dense_hidden;
        }
        encoder.push(dense("enc.out", width, 2 * latent));

        let mut decoder = Vec::new();
        let mut width = latent;
        if arch.dense_hidden > 0 {
            decoder.push(dense("dec.hidden", latent, arch.dense_hidden));
            decoder.push(elu("dec.hidden"));
            width = arch.dense_hidden;
        }
        decoder.push(dense("dec.expand", width, flat));
        decoder.push(elu("dec.expand"));
        decoder.push(LayerSpec::new(
            "dec.reshape",
            LayerKind::Reshape { shape: vec![c_in, bottleneck, bottleneck, bottleneck] },
        ));
        let outs: Vec<usize> = arch.conv_channels.iter().rev().skip(1).copied().chain([1]).collect();
        for (k, &c) in outs.iter().enumerate() {
            let name = format!("dec.tconv{k}");
            decoder.push(LayerSpec::new(
                &name,
                LayerKind::TConv3 {
                    in_channels: c_in,
                    out_channels: c,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                    output_padding: 1,
                },
            ));
            if k + 1 < outs.len() {
                decoder.push(elu(&name));
            }
            c_in = c;
        }
        decoder.push(LayerSpec::new("dec.out", LayerKind::Sigmoid));

        let inputs = [
            vocab.classes,
            vocab.classes + vocab.instances,
            vocab.viewpoints,
            vocab.translations,
        ];
        let priors = Block::ALL.map(|b| {
            let prefix = format!("prior.{}", b.tag());
            let (fan_in, dim) = (inputs[b.index()], config.dim(b));
            if arch.prior_hidden > 0 {
                vec![
                    dense(format!("{prefix}.0"), fan_in, arch.prior_hidden),
                    elu(&format!("{prefix}.0")),
                    dense(format!("{prefix}.1"), arch.prior_hidden, dim),
                ]
            } else {
                vec![dense(format!("{prefix}.0"), fan_in, dim)]
            }
        });

        Ok(ModelCheckpoint { config, vocab, resolution, params, history, encoder, decoder, priors })
    }

    pub fn encoder_layers(&self) -> &[LayerSpec] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[LayerSpec] {
        &self.decoder
    }

    pub fn prior_layers(&self, block: Block) -> &[LayerSpec] {
        &self.priors[block.index()]
    }

    fn check_resolution(&self, grid: &VoxelGrid) -> Result<()> {
        if grid.resolution() != self.resolution {
            return Err(Error::shape(
                "encode",
                format!("view resolution {} does not match model resolution {}", grid.resolution(), self.resolution),
            ));
        }
        Ok(())
    }

    /// One-hot prior network input; the instance prior sees class ⊕ instance.
    pub fn prior_input(&self, block: Block, label: &LabelTuple) -> Result<Vec<f64>> {
        self.vocab.check(label)?;
        let v = &self.vocab;
        let one_hot = |n: usize, k: usize| {
            let mut x = vec![0.0; n];
            x[k] = 1.0;
            x
        };
        Ok(match block {
            Block::Class => one_hot(v.classes, label.class_id),
            Block::Instance => {
                let mut x = one_hot(v.classes, label.class_id);
                x.extend(one_hot(v.instances, label.instance_id));
                x
            }
            Block::View => one_hot(v.viewpoints, label.viewpoint_id),
            Block::Translation => one_hot(v.translations, label.translation_id),
        })
    }

    /// Records the encoder; returns `(mean, log_std)`, each of latent length.
    pub(crate) fn encode_on<R: Rng>(
        &self,
        tape: &mut Tape<'_>,
        view: &VoxelGrid,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, Var)> {
        self.check_resolution(view)?;
        let x = tape.input(view.to_tensor());
        let out = tape.apply_layers(&self.encoder, x, mode, rng)?;
        let latent = self.config.latent_dim();
        Ok((tape.slice(out, 0, latent)?, tape.slice(out, latent, latent)?))
    }

    /// Records the decoder up to its output logits (the final sigmoid is left out).
    pub(crate) fn decode_logits_on(&self, tape: &mut Tape<'_>, z: Var) -> Result<Var> {
        let latent = self.config.latent_dim();
        if tape.value(z).len() != latent {
            return Err(Error::shape(
                "decode",
                format!("latent vector has {} values, expected {latent}", tape.value(z).len()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, body) = self.decoder.split_last().expect("decoder ends in a sigmoid");
        debug_assert_eq!(out.kind, LayerKind::Sigmoid);
        tape.apply_layers(body, z, Mode::Eval, &mut rng)
    }

    /// Records the decoder; output probabilities are clamped to `[eps, 1 - eps]`.
    pub(crate) fn decode_on(&self, tape: &mut Tape<'_>, z: Var) -> Result<Var> {
        let logits = self.decode_logits_on(tape, z)?;
        let p = tape.sigmoid(logits);
        let eps = self.config.eps;
        Ok(tape.clamp(p, eps, 1.0 - eps))
    }

    pub(crate) fn prior_on(&self, tape: &mut Tape<'_>, block: Block, label: &LabelTuple) -> Result<Var> {
        let x = tape.input(Tensor::vector(self.prior_input(block, label)?));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        tape.apply_layers(&self.priors[block.index()], x, Mode::Eval, &mut rng)
    }

    fn split_blocks(&self, flat: &[f64]) -> [Vec<f64>; 4] {
        Block::ALL.map(|b| {
            let o = self.config.offset(b);
            flat[o..o + self.config.dim(b)].to_vec()
        })
    }

    /// Posterior for a single view in evaluation mode.
    pub fn encode(&self, view: &VoxelGrid) -> Result<PosteriorBlocks> {
        self.encode_with(view, Mode::Eval, 0)
    }

    /// Posterior with explicit mode; `seed` drives dropout in training mode.
    pub fn encode_with(&self, view: &VoxelGrid, mode: Mode, seed: u64) -> Result<PosteriorBlocks> {
        let mut tape = Tape::new(&self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mean, log_std) = self.encode_on(&mut tape, view, mode, &mut rng)?;
        let std: Vec<f64> = tape.value(log_std).data().iter().map(|v| v.exp()).collect();
        Ok(PosteriorBlocks {
            mean: self.split_blocks(tape.value(mean).data()),
            std: self.split_blocks(&std),
        })
    }

    pub fn prior_lookup(&self, label: &LabelTuple) -> Result<PriorBlocks> {
        let mut tape = Tape::new(&self.params);
        let mut mean: [Vec<f64>; 4] = Default::default();
        for b in Block::ALL {
            let v = self.prior_on(&mut tape, b, label)?;
            mean[b.index()] = tape.value(v).data().to_vec();
        }
        Ok(PriorBlocks { mean })
    }

    /// Prior mean of one block; labels outside that block are ignored.
    pub fn prior_mean(&self, block: Block, label: &LabelTuple) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let v = self.prior_on(&mut tape, block, label)?;
        Ok(tape.value(v).data().to_vec())
    }

    pub fn decode(&self, z: &[f64]) -> Result<PredictedShape> {
        let mut tape = Tape::new(&self.params);
        let zv = tape.input(Tensor::vector(z.to_vec()));
        let p = self.decode_on(&mut tape, zv)?;
        Ok(PredictedShape { resolution: self.resolution, probs: tape.value(p).data().to_vec() })
    }
}

/// `n` latent draws `z = mean + std * eta`, concatenated over blocks.
pub fn reparameterize(post: &PosteriorBlocks, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("reparameterize needs at least one sample".into()));
    }
    let (mean, std) = (post.mean_concat(), post.std_concat());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            mean.iter()
                .zip(&std)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect())
}
