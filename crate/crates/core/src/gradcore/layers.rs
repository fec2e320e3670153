use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGroup, ParamStore};
use super::tape::{Mode, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    Conv3 {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TConv3 {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    Elu,
    Sigmoid,
    Dropout {
        rate: f64,
    },
    /// Reinterprets the flat activation with a new shape (dense -> conv volume).
    Reshape {
        shape: Vec<usize>,
    },
}

/// One layer of a stack; `name` prefixes its parameters (`{name}.w`, `{name}.b`).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec { name: name.into(), kind }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("layer {}: {msg}", self.name)));
        match self.kind {
            LayerKind::Dense { fan_in, fan_out } if fan_in == 0 || fan_out == 0 => bad("zero fan"),
            LayerKind::Conv3 { in_channels, out_channels, kernel, stride, .. }
            | LayerKind::TConv3 { in_channels, out_channels, kernel, stride, .. } => {
                if kernel == 0 {
                    bad("kernel size must be >= 1")
                } else if stride == 0 {
                    bad("stride must be >= 1")
                } else if in_channels == 0 || out_channels == 0 {
                    bad("zero channels")
                } else {
                    Ok(())
                }
            }
            LayerKind::Dropout { rate } if !(0.0..1.0).contains(&rate) => bad("dropout rate must lie in [0, 1)"),
            _ => Ok(()),
        }
    }

    /// Weight shape and Glorot fans, for layers that own parameters.
    fn weight_layout(&self) -> Option<(Vec<usize>, usize, usize, usize)> {
        match self.kind {
            LayerKind::Dense { fan_in, fan_out } => Some((vec![fan_out, fan_in], fan_in, fan_out, fan_out)),
            LayerKind::Conv3 { in_channels, out_channels, kernel, .. } => {
                let k3 = kernel * kernel * kernel;
                Some((
                    vec![out_channels, in_channels, kernel, kernel, kernel],
                    in_channels * k3,
                    out_channels * k3,
                    out_channels,
                ))
            }
            LayerKind::TConv3 { in_channels, out_channels, kernel, .. } => {
                let k3 = kernel * kernel * kernel;
                Some((
                    vec![in_channels, out_channels, kernel, kernel, kernel],
                    in_channels * k3,
                    out_channels * k3,
                    out_channels,
                ))
            }
            _ => None,
        }
    }
}

/// Uniform Glorot initialization in `±sqrt(6 / (fan_in + fan_out))`, shape `[fan_out, fan_in]`.
pub fn glorot_init(fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument("glorot_init needs positive fans".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Tensor::from_parts(vec![fan_out, fan_in], glorot_values(&mut rng, fan_in, fan_out, fan_in * fan_out)))
}

fn glorot_values<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Registers Glorot weights and zero biases for every parametric layer.
pub fn init_layers(store: &mut ParamStore, layers: &[LayerSpec], group: ParamGroup, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in layers {
        layer.validate()?;
        if let Some((shape, fan_in, fan_out, bias)) = layer.weight_layout() {
            let n = shape.iter().product();
            let w = Tensor::from_parts(shape, glorot_values(&mut rng, fan_in, fan_out, n));
            store.insert(format!("{}.w", layer.name), group, w)?;
            store.insert(format!("{}.b", layer.name), group, Tensor::zeros(&[bias]))?;
        }
    }
    Ok(())
}

impl<'p> Tape<'p> {
    pub fn apply_layer<R: Rng>(&mut self, layer: &LayerSpec, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let params = |tape: &mut Tape<'p>| -> Result<(Var, Var)> {
            let w = tape.param_named(&format!("{}.w", layer.name))?;
            let b = tape.param_named(&format!("{}.b", layer.name))?;
            Ok((w, b))
        };
        match &layer.kind {
            LayerKind::Dense { .. } => {
                let (w, b) = params(self)?;
                self.dense(x, w, b, &layer.name)
            }
            LayerKind::Conv3 { stride, padding, .. } => {
                let (w, b) = params(self)?;
                self.conv3(x, w, b, *stride, *padding, &layer.name)
            }
            LayerKind::TConv3 { stride, padding, output_padding, .. } => {
                let (w, b) = params(self)?;
                self.tconv3(x, w, b, *stride, *padding, *output_padding, &layer.name)
            }
            LayerKind::Elu => Ok(self.elu(x)),
            LayerKind::Sigmoid => Ok(self.sigmoid(x)),
            LayerKind::Dropout { rate } => Ok(self.dropout(x, *rate, mode, rng)),
            LayerKind::Reshape { shape } => self.reshape(x, shape, &layer.name),
        }
    }

    pub fn apply_layers<R: Rng>(&mut self, layers: &[LayerSpec], mut x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        for layer in layers {
            x = self.apply_layer(layer, x, mode, rng)?;
        }
        Ok(x)
    }
}

/// Runs a layer stack on `input`, returning the output node and its tape.
pub fn forward<'p>(
    params: &'p ParamStore,
    layers: &[LayerSpec],
    input: Tensor,
    mode: Mode,
    seed: u64,
) -> Result<(Var, Tape<'p>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new(params);
    let x = tape.input(input);
    let out = tape.apply_layers(layers, x, mode, &mut rng)?;
    Ok((out, tape))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bounds_and_determinism() {
        let t = glorot_init(1, 1, 7).unwrap();
        let b = 3f64.sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= b));
        let big = glorot_init(100, 100, 11).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(big.data().iter().all(|v| v.abs() <= bound));
        let mean = big.data().iter().sum::<f64>() / big.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert_eq!(big, glorot_init(100, 100, 11).unwrap());
        assert!(glorot_init(0, 3, 1).is_err());
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut store = ParamStore::new();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        store.insert("id.w", ParamGroup::Encoder, Tensor::new(vec![3, 3], eye).unwrap()).unwrap();
        store.insert("id.b", ParamGroup::Encoder, Tensor::zeros(&[3])).unwrap();
        let layers = [LayerSpec::new("id", LayerKind::Dense { fan_in: 3, fan_out: 3 })];
        let v = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let (out, tape) = forward(&store, &layers, v.clone(), Mode::Eval, 0).unwrap();
        assert_eq!(tape.value(out).data(), v.data());
    }

    #[test]
    fn ones_kernel_counts_occupied_block() {
        let mut store = ParamStore::new();
        store
            .insert("c.w", ParamGroup::Encoder, Tensor::new(vec![1, 1, 2, 2, 2], vec![1.0; 8]).unwrap())
            .unwrap();
        store.insert("c.b", ParamGroup::Encoder, Tensor::zeros(&[1])).unwrap();
        let layers = [LayerSpec::new(
            "c",
            LayerKind::Conv3 { in_channels: 1, out_channels: 1, kernel: 2, stride: 2, padding: 0 },
        )];
        // occupy the 2^3 block starting at (2, 0, 2)
        let mut grid = vec![0.0; 64];
        for d in 2..4 {
            for h in 0..2 {
                for w in 2..4 {
                    grid[(d * 4 + h) * 4 + w] = 1.0;
                }
            }
        }
        let input = Tensor::new(vec![1, 4, 4, 4], grid).unwrap();
        let (out, tape) = forward(&store, &layers, input, Mode::Eval, 0).unwrap();
        let y = tape.value(out);
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        let expected: Vec<f64> = (0..8).map(|i| if i == 0b101 { 8.0 } else { 0.0 }).collect();
        assert_eq!(y.data(), expected.as_slice());
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut store = ParamStore::new();
        let layers = [LayerSpec::new("enc.fc9", LayerKind::Dense { fan_in: 4, fan_out: 2 })];
        init_layers(&mut store, &layers, ParamGroup::Encoder, 1).unwrap();
        let err = forward(&store, &layers, Tensor::vector(vec![1.0; 5]), Mode::Eval, 0).err().unwrap();
        assert!(err.to_string().contains("enc.fc9"), "{err}");
    }

    #[test]
    fn eval_dropout_is_identity_and_train_scales() {
        let store = ParamStore::new();
        let layers = [LayerSpec::new("drop", LayerKind::Dropout { rate: 0.5 })];
        let x = Tensor::vector(vec![1.0; 64]);
        let (out, tape) = forward(&store, &layers, x.clone(), Mode::Eval, 3).unwrap();
        assert_eq!(tape.value(out), &x);
        let (out, tape) = forward(&store, &layers, x, Mode::Train, 3).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let conv = |kernel, stride| LayerSpec::new(
            "c",
            LayerKind::Conv3 { in_channels: 1, out_channels: 1, kernel, stride, padding: 0 },
        );
        assert!(conv(0, 1).validate().is_err());
        assert!(conv(1, 0).validate().is_err());
        assert!(LayerSpec::new("d", LayerKind::Dropout { rate: 1.0 }).validate().is_err());
    }
}
