use super::features::{encode_feature, gaussian_logpdf, EncodedFeature, PriorTable};
use crate::error::{Error, Result};
use crate::vae::ModelCheckpoint;
use crate::voxeldata::VoxelGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MleMode {
    /// Only the class block against each class mean.
    ClassOnly,
    /// The joint class-instance block against every `(class, instance)` mean.
    #[default]
    ClassAndInstance,
}

impl std::str::FromStr for MleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(MleMode::ClassOnly),
            "class-instance" => Ok(MleMode::ClassAndInstance),
            other => Err(Error::Config(format!("unknown MLE mode {other:?} (class|class-instance)"))),
        }
    }
}

impl std::fmt::Display for MleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MleMode::ClassOnly => "class",
            MleMode::ClassAndInstance => "class-instance",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: usize,
    /// Best instance of the predicted class; `None` in class-only mode.
    pub instance: Option<usize>,
    /// Best log-density reached by each class.
    pub scores: Vec<f64>,
}

/// Index of the first maximum; `None` if empty or any value is NaN.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    if values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Maximum-likelihood label under the prior networks; ties go to the lowest index.
pub fn mle_classify(table: &PriorTable, feature: &EncodedFeature, mode: MleMode) -> Result<Classification> {
    if feature.dim() != table.feature_dim() {
        return Err(Error::shape(
            "mle_classify",
            format!("feature has {} dimensions, priors have {}", feature.dim(), table.feature_dim()),
        ));
    }
    let undefined = || Error::InvalidArgument("classification scores contain NaN".into());
    match mode {
        MleMode::ClassOnly => {
            let dc = table.class_means[0].len();
            let scores = table
                .class_means
                .iter()
                .map(|m| gaussian_logpdf(&feature.mean[..dc], m))
                .collect::<Result<Vec<_>>>()?;
            let class = argmax_first(&scores).ok_or_else(undefined)?;
            Ok(Classification { class, instance: None, scores })
        }
        MleMode::ClassAndInstance => {
            let joint = (0..table.len())
                .map(|k| table.log_density(feature, k))
                .collect::<Result<Vec<_>>>()?;
            let best = argmax_first(&joint).ok_or_else(undefined)?;
            let scores = (0..table.classes)
                .map(|c| {
                    joint[c * table.instances..(c + 1) * table.instances]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            Ok(Classification { class: table.class_of(best), instance: Some(best % table.instances), scores })
        }
    }
}

pub fn classify_view(
    model: &ModelCheckpoint,
    table: &PriorTable,
    view: &VoxelGrid,
    mode: MleMode,
) -> Result<Classification> {
    mle_classify(table, &encode_feature(model, view)?, mode)
}

/// Full shape decoded from the posterior means, thresholded at 0.5.
pub fn retrieve(model: &ModelCheckpoint, view: &VoxelGrid) -> Result<VoxelGrid> {
    let post = model.encode(view)?;
    model.decode(&post.mean_concat())?.threshold()
}
