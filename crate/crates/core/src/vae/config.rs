use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::AdamConfig;

/// Latent factor blocks in their fixed concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Class,
    Instance,
    View,
    Translation,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Class, Block::Instance, Block::View, Block::Translation];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short tag used in parameter names and config keys.
    pub fn tag(self) -> &'static str {
        match self {
            Block::Class => "c",
            Block::Instance => "i",
            Block::View => "v",
            Block::Translation => "t",
        }
    }
}

/// Network shape. Conv layers use kernel 3, stride 2, padding 1, so the
/// resolution must be divisible by `2^conv_channels.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv_channels: Vec<usize>,
    /// Width of the hidden dense layer on both sides; 0 removes it.
    pub dense_hidden: usize,
    /// Width of the hidden layer of every prior network; 0 removes it.
    pub prior_hidden: usize,
    /// Applied to the encoder's hidden dense layer in training mode.
    pub dropout: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            conv_channels: vec![8, 16, 32],
            dense_hidden: 64,
            prior_hidden: 64,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent sizes indexed by [`Block::index`].
    pub dims: [usize; 4],
    pub arch: Architecture,
    /// Reparameterization samples per training example.
    pub samples: usize,
    /// Minimum prior separation per block.
    pub delta: [f64; 4],
    pub lambda_rg: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability clamp: decoder outputs lie in `[eps, 1 - eps]`.
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dims: [8, 8, 4, 4],
            arch: Architecture::default(),
            samples: 1,
            delta: [4.0, 4.0, 2.0, 2.0],
            lambda_rg: 1.0,
            adam: AdamConfig::default(),
            epochs: 40,
            batch_size: 32,
            eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn latent_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn dim(&self, block: Block) -> usize {
        self.dims[block.index()]
    }

    /// Offset of `block` inside the concatenated latent vector.
    pub fn offset(&self, block: Block) -> usize {
        self.dims[..block.index()].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dims.contains(&0) {
            return bad(format!("latent block sizes must be positive, got {:?}", self.dims));
        }
        if self.samples == 0 {
            return bad("vae.samples must be >= 1".into());
        }
        if self.delta.iter().any(|d| !(*d > 0.0)) {
            return bad(format!("separation thresholds must be positive, got {:?}", self.delta));
        }
        if !(self.lambda_rg >= 0.0) {
            return bad("vae.lambda_rg must be >= 0".into());
        }
        if !(self.eps > 0.0 && self.eps < 0.1) {
            return bad(format!("vae.eps must lie in (0, 0.1), got {}", self.eps));
        }
        if self.batch_size == 0 {
            return bad("vae.batch_size must be >= 1".into());
        }
        if self.arch.conv_channels.is_empty() || self.arch.conv_channels.contains(&0) {
            return bad("vae.conv_channels needs at least one positive entry".into());
        }
        if !(0.0..1.0).contains(&self.arch.dropout) {
            return bad("vae.dropout must lie in [0, 1)".into());
        }
        if !(self.adam.lr >= 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("invalid Adam hyperparameters".into());
        }
        Ok(())
    }

    /// Spatial size after the conv stack, or an error naming the constraint.
    pub fn bottleneck(&self, resolution: usize) -> Result<usize> {
        let factor = 1usize << self.arch.conv_channels.len();
        if resolution % factor != 0 || resolution < factor {
            return Err(Error::Config(format!(
                "resolution {resolution} must be a multiple of {factor} for {} conv layers",
                self.arch.conv_channels.len()
            )));
        }
        Ok(resolution / factor)
    }
}
