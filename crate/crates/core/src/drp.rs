//! Dependency regularized perturbation: mixes a knockoff with a row-permuted
//! copy of the design, `(1 − α)·X̃ + α·X_σ`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrpConfig {
    pub alpha: f64,
    pub seed: u64,
    /// When set, `α = c / √n` replaces the fixed `alpha`.
    pub schedule_c: Option<f64>,
}

impl Default for DrpConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            seed: 0,
            schedule_c: None,
        }
    }
}

impl DrpConfig {
    pub fn fixed(alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            seed,
            schedule_c: None,
        }
    }

    pub fn inverse_sqrt(c: f64, seed: u64) -> Self {
        Self {
            alpha: 0.5,
            seed,
            schedule_c: Some(c),
        }
    }

    /// The mixing weight used for a sample of `n` rows.
    pub fn effective_alpha(&self, n: usize) -> f64 {
        match self.schedule_c {
            Some(c) => (c / (n as f64).sqrt()).clamp(0.0, 1.0),
            None => self.alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(c) = self.schedule_c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("schedule constant must be nonnegative, got {c}")));
            }
        }
        Ok(())
    }
}

/// A perturbed knockoff with the information needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrpOutput {
    pub knockoff: Array2<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub permutation: Vec<usize>,
    pub permutation_digest: String,
}

/// SHA-256 over the little-endian permutation indices, hex encoded.
pub fn permutation_digest(perm: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in perm {
        h.update((i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// `(1 − α)·X̃ + α·X[perm]` for an explicit row permutation.
pub fn apply_drp_with_permutation(
    xk: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    alpha: f64,
    perm: &[usize],
) -> Result<Array2<f64>> {
    if xk.dim() != x.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    if perm.len() != x.nrows() {
        return Err(Error::shape(x.nrows(), perm.len()));
    }
    let mut seen = vec![false; perm.len()];
    for &i in perm {
        if i >= perm.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("not a permutation of the rows"));
        }
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let xs = x.select(Axis(0), perm);
    Ok(&xk * (1.0 - alpha) + &xs * alpha)
}

/// Draws one uniform row permutation from `cfg.seed` and mixes.
pub fn apply_drp(xk: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>, cfg: &DrpConfig) -> Result<DrpOutput> {
    cfg.validate()?;
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    perm.shuffle(&mut rng::rng(cfg.seed));
    let alpha = cfg.effective_alpha(x.nrows());
    let knockoff = apply_drp_with_permutation(xk, x, alpha, &perm)?;
    Ok(DrpOutput {
        knockoff,
        alpha,
        seed: cfg.seed,
        permutation_digest: permutation_digest(&perm),
        permutation: perm,
    })
}
