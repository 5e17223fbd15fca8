//! Named parameter storage and the decoupled-weight-decay Adam optimizer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Ordered collection of named parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, slot: usize) -> &Array2<f64> {
        &self.values[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut Array2<f64> {
        &mut self.values[slot]
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Reads the `k`-th scalar in slot-major, row-major order.
    pub fn flat_get(&self, k: usize) -> f64 {
        let (slot, off) = self.locate(k);
        self.values[slot].as_slice().expect("standard layout")[off]
    }

    pub fn flat_set(&mut self, k: usize, v: f64) {
        let (slot, off) = self.locate(k);
        self.values[slot].as_slice_mut().expect("standard layout")[off] = v;
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (slot, v) in self.values.iter().enumerate() {
            if k < v.len() {
                return (slot, k);
            }
            k -= v.len();
        }
        panic!("flat index out of range");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// AdamW with bias correction; weight decay is applied to the parameter
/// directly, not folded into the gradient.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &ParamStore) -> Self {
        let zeros = || params.values.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step. `grads[slot]` of `None` leaves that slot's moments
    /// untouched but still applies weight decay.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Array2<f64>>]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (slot, p) in params.values.iter_mut().enumerate() {
            p.mapv_inplace(|x| x * (1.0 - c.lr * c.weight_decay));
            let Some(g) = grads.get(slot).and_then(Option::as_ref) else {
                continue;
            };
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= c.lr * mhat / (vhat.sqrt() + c.eps);
                });
        }
    }
}
