use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Which network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    /// θ, the shape decoder.
    Decoder,
    /// φ, the single-view encoder.
    Encoder,
    /// ψ, the label-conditional prior networks.
    Prior,
}

impl ParamGroup {
    pub fn code(self) -> u8 {
        match self {
            ParamGroup::Decoder => 0,
            ParamGroup::Encoder => 1,
            ParamGroup::Prior => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ParamGroup::Decoder),
            1 => Some(ParamGroup::Encoder),
            2 => Some(ParamGroup::Prior),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    group: ParamGroup,
    value: Tensor,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

/// Named trainable tensors plus their Adam state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        let n = value.len();
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(Entry {
            name,
            group,
            value,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            steps: 0,
        });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.entries[id.0].group
    }

    pub fn steps(&self, id: ParamId) -> u64 {
        self.entries[id.0].steps
    }

    /// Adam moments `(m, v)` of one parameter.
    pub fn moments(&self, id: ParamId) -> (&[f64], &[f64]) {
        let e = &self.entries[id.0];
        (&e.first_moment, &e.second_moment)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.value.shape() != value.shape() {
            return Err(Error::shape(
                e.name.clone(),
                format!("expected {:?}, got {:?}", e.value.shape(), value.shape()),
            ));
        }
        e.value = value;
        Ok(())
    }

    pub(crate) fn element_mut(&mut self, id: ParamId, index: usize) -> &mut f64 {
        &mut self.entries[id.0].value.data_mut()[index]
    }

    /// One bias-corrected Adam update for every parameter.
    pub fn adam_step(&mut self, grads: &GradientMap, cfg: &AdamConfig) -> Result<()> {
        if grads.grads.len() != self.entries.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} gradients for {} parameters", grads.grads.len(), self.entries.len()),
            ));
        }
        for (e, g) in self.entries.iter_mut().zip(&grads.grads) {
            if g.shape() != e.value.shape() {
                return Err(Error::shape(
                    e.name.clone(),
                    format!("gradient {:?} vs parameter {:?}", g.shape(), e.value.shape()),
                ));
            }
            e.steps += 1;
            let t = e.steps as f64;
            let bias1 = 1.0 - cfg.beta1.powf(t);
            let bias2 = 1.0 - cfg.beta2.powf(t);
            let values = e.value.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                let m = cfg.beta1 * e.first_moment[i] + (1.0 - cfg.beta1) * gi;
                let v = cfg.beta2 * e.second_moment[i] + (1.0 - cfg.beta2) * gi * gi;
                e.first_moment[i] = m;
                e.second_moment[i] = v;
                let m_hat = m / bias1;
                let v_hat = v / bias2;
                values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Gradients aligned one-to-one with the entries of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    grads: Vec<Tensor>,
}

impl GradientMap {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradientMap {
            grads: params.entries.iter().map(|e| Tensor::zeros(e.value.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradientMap) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            for x in g.data_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store
            .insert("p", ParamGroup::Encoder, Tensor::vector(values))
            .unwrap();
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameter_unchanged() {
        let (mut store, id) = store_with(vec![0.3, -1.2, 4.0]);
        let before = store.value(id).clone();
        let grads = GradientMap::zeros_like(&store);
        store.adam_step(&grads, &AdamConfig::default()).unwrap();
        assert_eq!(store.value(id), &before);
        assert_eq!(store.steps(id), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let (mut store, id) = store_with(vec![0.0, 0.0, 0.0]);
        let mut grads = GradientMap::zeros_like(&store);
        grads.get_mut(id).data_mut().copy_from_slice(&[2.0, -0.5, 1e-3]);
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        store.adam_step(&grads, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let expected = [-0.01, 0.01, -0.01];
        for (v, e) in store.value(id).data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-7, "{v} vs {e}");
        }
    }

    #[test]
    fn constant_gradient_update_approaches_lr() {
        let (mut store, id) = store_with(vec![0.0]);
        let mut grads = GradientMap::zeros_like(&store);
        grads.get_mut(id).data_mut()[0] = 0.7;
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut last = 0.0;
        let mut step = 0.0;
        for _ in 0..5000 {
            store.adam_step(&grads, &cfg).unwrap();
            let now = store.value(id).data()[0];
            step = last - now;
            last = now;
        }
        // With bias correction m_hat = v_hat.sqrt() = g exactly, so the step
        // is lr * g / (g + eps).
        let limit = cfg.lr * 0.7 / (0.7 + cfg.eps);
        assert!((step - limit).abs() < 1e-12, "{step} vs {limit}");
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let (mut store, id) = store_with(vec![0.125, -3.5, 1e-300]);
        let before = store.value(id).clone();
        let mut grads = GradientMap::zeros_like(&store);
        grads.get_mut(id).data_mut().copy_from_slice(&[1.0, -2.0, 3.0]);
        let cfg = AdamConfig { lr: 0.0, ..AdamConfig::default() };
        for _ in 0..3 {
            store.adam_step(&grads, &cfg).unwrap();
        }
        assert_eq!(store.value(id).data(), before.data());
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut store, _) = store_with(vec![1.0]);
        assert!(store.insert("p", ParamGroup::Prior, Tensor::scalar(0.0)).is_err());
    }
}
