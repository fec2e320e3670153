use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::MleMode;
use crate::slam::SlamConfig;
use crate::vae::TrainConfig;
use crate::voxeldata::{DataConfig, SplitMode};

/// Evaluation-time settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub mode: MleMode,
    /// Monte Carlo draws for the reconstruction factor of the full likelihood.
    pub mc_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { mode: MleMode::ClassAndInstance, mc_samples: 16 }
    }
}

/// Every tunable of a run. Text form is one `section.key = value` per line;
/// `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    /// `train.seed` always mirrors `seed`.
    pub train: TrainConfig,
    pub slam: SlamConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            slam: SlamConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn array4<T: FromStr + Copy>(key: &str, value: &str) -> Result<[T; 4]>
where
    T::Err: Display,
{
    let v: Vec<T> = list(key, value)?;
    v.try_into().map_err(|v: Vec<T>| Error::Config(format!("{key} needs 4 comma-separated values, got {}", v.len())))
}

fn bool_value(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let (d, t, s) = (&mut self.data, &mut self.train, &mut self.slam);
        match key {
            "run.seed" => {
                self.seed = num(key, v)?;
                t.seed = self.seed;
            }
            "run.out" => self.out = PathBuf::from(v),
            "data.classes" => d.classes = num(key, v)?,
            "data.instances" => d.instances = num(key, v)?,
            "data.viewpoints" => d.viewpoints = num(key, v)?,
            "data.resolution" => d.resolution = num(key, v)?,
            "data.max_shift" => d.max_shift = num(key, v)?,
            "data.noise_rate" => d.noise_rate = num(key, v)?,
            "data.camera_distance" => d.camera_distance = num(key, v)?,
            "data.split_mode" => d.split_mode = v.parse::<SplitMode>()?,
            "data.test_instances" => d.test_instances = num(key, v)?,
            "data.test_view_stride" => d.test_view_stride = num(key, v)?,
            "train.dims" => t.dims = array4(key, v)?,
            "train.conv_channels" => t.arch.conv_channels = list(key, v)?,
            "train.dense_hidden" => t.arch.dense_hidden = num(key, v)?,
            "train.prior_hidden" => t.arch.prior_hidden = num(key, v)?,
            "train.dropout" => t.arch.dropout = num(key, v)?,
            "train.samples" => t.samples = num(key, v)?,
            "train.delta" => t.delta = array4(key, v)?,
            "train.lambda_rg" => t.lambda_rg = num(key, v)?,
            "train.lr" => t.adam.lr = num(key, v)?,
            "train.beta1" => t.adam.beta1 = num(key, v)?,
            "train.beta2" => t.adam.beta2 = num(key, v)?,
            "train.adam_eps" => t.adam.eps = num(key, v)?,
            "train.epochs" => t.epochs = num(key, v)?,
            "train.batch_size" => t.batch_size = num(key, v)?,
            "train.eps" => t.eps = num(key, v)?,
            "slam.landmarks" => s.landmarks = num(key, v)?,
            "slam.keyframes" => s.keyframes = num(key, v)?,
            "slam.radius" => s.radius = num(key, v)?,
            "slam.landmark_spread" => s.landmark_spread = num(key, v)?,
            "slam.sensor_range" => s.sensor_range = num(key, v)?,
            "slam.sigma_p" => s.sigma_p = num(key, v)?,
            "slam.sigma_f" => s.sigma_f = num(key, v)?,
            "slam.feature_std" => s.feature_std = num(key, v)?,
            "slam.odometry_sigma_position" => s.odometry_sigma_position = num(key, v)?,
            "slam.odometry_sigma_yaw" => s.odometry_sigma_yaw = num(key, v)?,
            "slam.landmark_init_sigma" => s.landmark_init_sigma = num(key, v)?,
            "slam.injective" => s.injective = bool_value(key, v)?,
            "slam.max_iterations" => s.max_iterations = num(key, v)?,
            "slam.tolerance" => s.tolerance = num(key, v)?,
            "slam.enumeration_cap" => s.enumeration_cap = num(key, v)?,
            "eval.mode" => self.eval.mode = v.parse()?,
            "eval.mc_samples" => self.eval.mc_samples = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// All keys with their current values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (d, t, s) = (&self.data, &self.train, &self.slam);
        vec![
            ("run.seed", self.seed.to_string()),
            ("run.out", self.out.display().to_string()),
            ("data.classes", d.classes.to_string()),
            ("data.instances", d.instances.to_string()),
            ("data.viewpoints", d.viewpoints.to_string()),
            ("data.resolution", d.resolution.to_string()),
            ("data.max_shift", d.max_shift.to_string()),
            ("data.noise_rate", d.noise_rate.to_string()),
            ("data.camera_distance", d.camera_distance.to_string()),
            ("data.split_mode", d.split_mode.to_string()),
            ("data.test_instances", d.test_instances.to_string()),
            ("data.test_view_stride", d.test_view_stride.to_string()),
            ("train.dims", join(&t.dims)),
            ("train.conv_channels", join(&t.arch.conv_channels)),
            ("train.dense_hidden", t.arch.dense_hidden.to_string()),
            ("train.prior_hidden", t.arch.prior_hidden.to_string()),
            ("train.dropout", t.arch.dropout.to_string()),
            ("train.samples", t.samples.to_string()),
            ("train.delta", join(&t.delta)),
            ("train.lambda_rg", t.lambda_rg.to_string()),
            ("train.lr", t.adam.lr.to_string()),
            ("train.beta1", t.adam.beta1.to_string()),
            ("train.beta2", t.adam.beta2.to_string()),
            ("train.adam_eps", t.adam.eps.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.eps", t.eps.to_string()),
            ("slam.landmarks", s.landmarks.to_string()),
            ("slam.keyframes", s.keyframes.to_string()),
            ("slam.radius", s.radius.to_string()),
            ("slam.landmark_spread", s.landmark_spread.to_string()),
            ("slam.sensor_range", s.sensor_range.to_string()),
            ("slam.sigma_p", s.sigma_p.to_string()),
            ("slam.sigma_f", s.sigma_f.to_string()),
            ("slam.feature_std", s.feature_std.to_string()),
            ("slam.odometry_sigma_position", s.odometry_sigma_position.to_string()),
            ("slam.odometry_sigma_yaw", s.odometry_sigma_yaw.to_string()),
            ("slam.landmark_init_sigma", s.landmark_init_sigma.to_string()),
            ("slam.injective", s.injective.to_string()),
            ("slam.max_iterations", s.max_iterations.to_string()),
            ("slam.tolerance", s.tolerance.to_string()),
            ("slam.enumeration_cap", s.enumeration_cap.to_string()),
            ("eval.mode", self.eval.mode.to_string()),
            ("eval.mc_samples", self.eval.mc_samples.to_string()),
        ]
    }

    /// Parses configuration text over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values; a key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            self.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not `section.key=value`")))?;
        self.set(key.trim(), value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// The fully resolved configuration as text that parses back to `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.train.bottleneck(self.data.resolution)?;
        self.slam.validate()?;
        if self.eval.mc_samples == 0 {
            return Err(Error::Config("eval.mc_samples must be >= 1".into()));
        }
        Ok(())
    }
}
