use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vae::{Block, ModelCheckpoint, PosteriorBlocks};
use crate::voxeldata::{LabelTuple, VoxelGrid};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-density of `N(mu, I)` at `x`.
pub fn gaussian_logpdf(x: &[f64], mu: &[f64]) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::shape("gaussian_logpdf", format!("{} vs {} dimensions", x.len(), mu.len())));
    }
    let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * x.len() as f64 * LN_2PI - 0.5 * sq)
}

/// Class and instance blocks of a posterior, the stand-in for the full shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeature {
    /// `(mean_c, mean_i)` concatenated.
    pub mean: Vec<f64>,
    /// `(std_c, std_i)` concatenated.
    pub std: Vec<f64>,
}

impl EncodedFeature {
    pub fn from_posterior(post: &PosteriorBlocks) -> Self {
        EncodedFeature {
            mean: [post.mean(Block::Class), post.mean(Block::Instance)].concat(),
            std: [post.std(Block::Class), post.std(Block::Instance)].concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn encode_feature(model: &ModelCheckpoint, view: &VoxelGrid) -> Result<EncodedFeature> {
    Ok(EncodedFeature::from_posterior(&model.encode(view)?))
}

/// Features for many views, computed in parallel and returned in input order.
pub fn encode_features(model: &ModelCheckpoint, views: &[&VoxelGrid]) -> Result<Vec<EncodedFeature>> {
    views.par_iter().map(|v| encode_feature(model, v)).collect()
}

/// Prior means of every `(class, instance)` label, indexed `class * instances + instance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub classes: usize,
    pub instances: usize,
    /// One class-block mean per class.
    pub class_means: Vec<Vec<f64>>,
    /// One instance-block mean per `(class, instance)`.
    pub instance_means: Vec<Vec<f64>>,
}

impl PriorTable {
    pub fn from_model(model: &ModelCheckpoint) -> Result<Self> {
        let (classes, instances) = (model.vocab.classes, model.vocab.instances);
        let label = |c, i| LabelTuple { class_id: c, instance_id: i, viewpoint_id: 0, translation_id: 0 };
        let class_means = (0..classes)
            .map(|c| model.prior_mean(Block::Class, &label(c, 0)))
            .collect::<Result<_>>()?;
        let instance_means = (0..classes * instances)
            .map(|k| model.prior_mean(Block::Instance, &label(k / instances, k % instances)))
            .collect::<Result<_>>()?;
        PriorTable::new(classes, instances, class_means, instance_means)
    }

    pub fn new(
        classes: usize,
        instances: usize,
        class_means: Vec<Vec<f64>>,
        instance_means: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if classes == 0 || instances == 0 {
            return Err(Error::Vocabulary("prior table needs at least one class and instance".into()));
        }
        if class_means.len() != classes || instance_means.len() != classes * instances {
            return Err(Error::shape("PriorTable", "mean counts do not match the vocabulary"));
        }
        let (dc, di) = (class_means[0].len(), instance_means[0].len());
        if class_means.iter().any(|m| m.len() != dc) || instance_means.iter().any(|m| m.len() != di) {
            return Err(Error::shape("PriorTable", "prior means differ in length"));
        }
        Ok(PriorTable { classes, instances, class_means, instance_means })
    }

    /// Number of `(class, instance)` labels.
    pub fn len(&self) -> usize {
        self.classes * self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.class_means[0].len() + self.instance_means[0].len()
    }

    /// `(mean_c, mean_i)` for label index `class * instances + instance`.
    pub fn joint_mean(&self, label: usize) -> Vec<f64> {
        [&self.class_means[label / self.instances][..], &self.instance_means[label][..]].concat()
    }

    pub fn class_of(&self, label: usize) -> usize {
        label / self.instances
    }

    /// `log p(mean | label)` under the joint class-instance prior.
    pub fn log_density(&self, feature: &EncodedFeature, label: usize) -> Result<f64> {
        gaussian_logpdf(&feature.mean, &self.joint_mean(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logpdf_reference_values() {
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((gaussian_logpdf(&[0.3, -1.0], &[0.3, -1.0]).unwrap() + two_pi.ln()).abs() < 1e-15);
        assert!((gaussian_logpdf(&[1.0, 1.0], &[0.0, 0.0]).unwrap() - (-two_pi.ln() - 1.0)).abs() < 1e-15);
        assert!(gaussian_logpdf(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        // composite Simpson on [-12, 12]
        let (a, b, n) = (-12.0f64, 12.0f64, 20_000usize);
        let h = (b - a) / n as f64;
        let f = |x: f64| gaussian_logpdf(&[x], &[0.7]).unwrap().exp();
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn table_indexing() {
        let t = PriorTable::new(2, 3, vec![vec![0.0], vec![1.0]], (0..6).map(|k| vec![k as f64, 0.5]).collect())
            .unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.joint_mean(4), vec![1.0, 4.0, 0.5]);
        assert_eq!(t.class_of(4), 1);
        assert_eq!(t.feature_dim(), 3);
        assert!(PriorTable::new(2, 3, vec![vec![0.0]], vec![]).is_err());
    }
}
