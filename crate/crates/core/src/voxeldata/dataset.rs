use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{add_noise, translate};
use super::grid::{LabelTuple, TranslationTable, Vocab, VoxelGrid};
use super::render::{render_single_view, DEFAULT_DISTANCE_FACTOR};
use super::shapes::generate_shape;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// How held-out samples are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// The last `test_instances` instances of every class are held out entirely.
    Instance,
    /// Every instance stays in training; viewpoints with
    /// `(viewpoint + instance) % test_view_stride == 0` are held out.
    View,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instance" => Ok(SplitMode::Instance),
            "view" => Ok(SplitMode::View),
            other => Err(Error::Config(format!("unknown split mode {other:?} (instance|view)"))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::Instance => "instance",
            SplitMode::View => "view",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub classes: usize,
    pub instances: usize,
    /// 12 or 24.
    pub viewpoints: usize,
    pub resolution: usize,
    pub max_shift: i32,
    pub noise_rate: f64,
    /// Camera distance in grid half-widths.
    pub camera_distance: f64,
    pub split_mode: SplitMode,
    pub test_instances: usize,
    pub test_view_stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            classes: 4,
            instances: 8,
            viewpoints: 12,
            resolution: 16,
            max_shift: 2,
            noise_rate: 0.05,
            camera_distance: DEFAULT_DISTANCE_FACTOR,
            split_mode: SplitMode::Instance,
            test_instances: 2,
            test_view_stride: 4,
        }
    }
}

impl DataConfig {
    pub fn vocab(&self) -> Vocab {
        Vocab {
            classes: self.classes,
            instances: self.instances,
            viewpoints: self.viewpoints,
            translations: TranslationTable::new(self.max_shift).len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.instances == 0 {
            return Err(Error::Config("classes and instances must be positive".into()));
        }
        if self.viewpoints != 12 && self.viewpoints != 24 {
            return Err(Error::Config(format!("viewpoints must be 12 or 24, got {}", self.viewpoints)));
        }
        if self.max_shift < 0 {
            return Err(Error::Config("max_shift must be non-negative".into()));
        }
        match self.split_mode {
            SplitMode::Instance if self.test_instances >= self.instances => Err(Error::Config(format!(
                "test_instances {} leaves no training instance out of {}",
                self.test_instances, self.instances
            ))),
            SplitMode::View if self.test_view_stride < 2 => {
                Err(Error::Config("test_view_stride must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn split_of(&self, instance_id: usize, viewpoint_id: usize) -> Split {
        let held_out = match self.split_mode {
            SplitMode::Instance => instance_id >= self.instances - self.test_instances,
            SplitMode::View => (viewpoint_id + instance_id) % self.test_view_stride == 0,
        };
        if held_out {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub label: LabelTuple,
    /// Translated full shape, the reconstruction target.
    pub full: VoxelGrid,
    /// Translated single view, the encoder input.
    pub view: VoxelGrid,
    pub noisy: bool,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub resolution: usize,
    pub vocab: Vocab,
    pub max_shift: i32,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn train(&self) -> Vec<&Sample> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Sample> {
        self.split(Split::Test).collect()
    }
}

/// Full shape, rendered view and a shared random translation for every
/// `(class, instance, viewpoint)`, in two copies of which the second carries
/// voxel-flip noise on its view. No mirroring is applied.
pub fn build_dataset(config: &DataConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let table = TranslationTable::new(config.max_shift);
    let shapes: Vec<VoxelGrid> = (0..config.classes)
        .flat_map(|c| (0..config.instances).map(move |i| (c, i)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, i)| generate_shape(c, i, config.resolution, seed))
        .collect::<Result<_>>()?;

    let keys: Vec<(usize, usize, usize)> = (0..config.classes)
        .flat_map(|c| (0..config.instances).flat_map(move |i| (0..config.viewpoints).map(move |v| (c, i, v))))
        .collect();
    let pairs: Vec<[Sample; 2]> = keys
        .into_par_iter()
        .map(|(c, i, v)| {
            let full = &shapes[c * config.instances + i];
            let view = render_single_view(full, v, config.viewpoints, config.camera_distance)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, c as u64, i as u64, v as u64]));
            let translation_id = rng.random_range(0..table.len());
            let offset = table.offset(translation_id).expect("id drawn from table");
            let full_t = translate(full, offset);
            let view_t = translate(&view, offset);
            let noisy_view = add_noise(&view_t, config.noise_rate, rng.random())?;
            let label = LabelTuple { class_id: c, instance_id: i, viewpoint_id: v, translation_id };
            let split = config.split_of(i, v);
            Ok([
                Sample { label, full: full_t.clone(), view: view_t, noisy: false, split },
                Sample { label, full: full_t, view: noisy_view, noisy: true, split },
            ])
        })
        .collect::<Result<_>>()?;

    Ok(Dataset {
        resolution: config.resolution,
        vocab: config.vocab(),
        max_shift: config.max_shift,
        samples: pairs.into_iter().flatten().collect(),
    })
}
