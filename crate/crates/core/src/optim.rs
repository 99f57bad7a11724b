//! Adam with L2 weight decay folded into the gradient.

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Tensor<T>>>,
    second: Vec<Option<Tensor<T>>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        Self {
            config,
            step: 0,
            first: vec![None; store.len()],
            second: vec![None; store.len()],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter holding a gradient; clears the
    /// gradients afterwards.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let bc1 = T::from_f64(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(self.step as i32));
        let (lr, wd, eps) = (T::from_f64(c.lr), T::from_f64(c.weight_decay), T::from_f64(c.eps));
        for (i, entry) in store.entries_mut().iter_mut().enumerate() {
            if !entry.trainable {
                continue;
            }
            let Some(grad) = entry.grad.take() else {
                continue;
            };
            let shape = grad.shape().to_vec();
            let m = self.first[i].get_or_insert_with(|| Tensor::zeros(&shape));
            let v = self.second[i].get_or_insert_with(|| Tensor::zeros(&shape));
            let p = std::sync::Arc::make_mut(&mut entry.value);
            for (((pv, &g), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = g + wd * *pv;
                *mv = b1 * *mv + one_b1 * g;
                *vv = b2 * *vv + one_b2 * g * g;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Moment buffers as named tensors, for persisting alongside a checkpoint.
    pub fn export(&self, store: &ParamStore<T>) -> Vec<(String, Tensor<T>)> {
        let mut out = vec![("adam.step".to_string(), Tensor::scalar(T::from_f64(self.step as f64)))];
        for (i, entry) in store.entries().iter().enumerate() {
            if let (Some(m), Some(v)) = (&self.first[i], &self.second[i]) {
                out.push((format!("adam.m.{}", entry.name), m.clone()));
                out.push((format!("adam.v.{}", entry.name), v.clone()));
            }
        }
        out
    }

    pub fn import(config: AdamConfig, store: &ParamStore<T>, tensors: &[(String, Tensor<T>)]) -> Result<Self> {
        let mut state = Self::new(config, store);
        for (name, t) in tensors {
            if name == "adam.step" {
                state.step = t.item().as_f64() as u64;
                continue;
            }
            let (slot, pname) = if let Some(p) = name.strip_prefix("adam.m.") {
                (&mut state.first, p)
            } else if let Some(p) = name.strip_prefix("adam.v.") {
                (&mut state.second, p)
            } else {
                return Err(Error::Checkpoint(format!("unexpected optimizer entry {name}")));
            };
            let id = store
                .find(pname)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer entry for unknown parameter {pname}")))?;
            slot[id.0] = Some(t.clone());
        }
        Ok(state)
    }
}
