//! Checks on a generated knockoff: how far the joint law of `(X, X̃)` moves
//! when random coordinate subsets are swapped, and how the feature statistics
//! split between nulls and nonnulls.

use ndarray::{concatenate, Array1, ArrayView2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mmd_linear, sliced_wasserstein_distance, EmpiricalSample, ProjectionConfig, TransportOrder, DEFAULT_PROJECTIONS};
use crate::model::swap_columns;
use crate::rng::{self, stream};

pub const DEFAULT_SWAP_RATIOS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapMetrics {
    pub ratio: f64,
    pub swap_size: usize,
    pub mmd_linear: f64,
    pub swd1: f64,
    pub swd2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub seed: u64,
    pub per_ratio: Vec<SwapMetrics>,
    pub mean_mmd_linear: f64,
    pub mean_swd1: f64,
    pub mean_swd2: f64,
}

/// `|B| = round(r·p)`, at least one coordinate for any positive ratio.
pub fn swap_size(ratio: f64, p: usize) -> usize {
    if ratio <= 0.0 {
        0
    } else {
        ((ratio * p as f64).round() as usize).clamp(1, p)
    }
}

pub fn swap_property_suite(x: ArrayView2<'_, f64>, xk: ArrayView2<'_, f64>, seed: u64) -> Result<SwapReport> {
    swap_property_suite_with_ratios(x, xk, &DEFAULT_SWAP_RATIOS, seed)
}

/// For each ratio, swaps a uniformly drawn subset and compares the joint
/// sample before and after. Ratio `0` is accepted and swaps nothing.
pub fn swap_property_suite_with_ratios(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    ratios: &[f64],
    seed: u64,
) -> Result<SwapReport> {
    if x.dim() != xk.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    if ratios.is_empty() || ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid("swap ratios must be nonempty and lie in [0, 1]"));
    }
    let p = x.ncols();
    let joint = concatenate(Axis(1), &[x, xk]).expect("row counts agree");
    let joint_sample = EmpiricalSample::new(joint)?;
    let mut per_ratio = Vec::with_capacity(ratios.len());
    for (idx, &ratio) in ratios.iter().enumerate() {
        let k = swap_size(ratio, p);
        let mut r = rng::rng_at(seed, &[stream::DIAGNOSTICS, idx as u64]);
        let subset = sample(&mut r, p, k).into_vec();
        let (xs, xks) = swap_columns(x, xk, &subset)?;
        let swapped = EmpiricalSample::new(concatenate(Axis(1), &[xs.view(), xks.view()]).expect("row counts agree"))?;
        let proj_seed = rng::derive(seed, &[stream::DIAGNOSTICS, idx as u64, stream::PROJECTIONS]);
        let swd = |order| {
            sliced_wasserstein_distance(
                &joint_sample,
                &swapped,
                &ProjectionConfig::seeded(DEFAULT_PROJECTIONS, order, proj_seed),
            )
        };
        per_ratio.push(SwapMetrics {
            ratio,
            swap_size: k,
            mmd_linear: mmd_linear(&joint_sample, &swapped)?,
            swd1: swd(TransportOrder::W1)?,
            swd2: swd(TransportOrder::W2)?,
        });
    }
    let mean = |f: fn(&SwapMetrics) -> f64| per_ratio.iter().map(f).sum::<f64>() / per_ratio.len() as f64;
    Ok(SwapReport {
        seed,
        mean_mmd_linear: mean(|m| m.mmd_linear),
        mean_swd1: mean(|m| m.swd1),
        mean_swd2: mean(|m| m.swd2),
        per_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub null: Option<ClassSummary>,
    pub nonnull: Option<ClassSummary>,
}

fn summarize(values: &[f64]) -> Option<ClassSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(ClassSummary {
        count: values.len(),
        mean,
        std: var.sqrt(),
    })
}

/// Pools the statistics of every trial and summarizes them by class.
pub fn statistic_distribution_summary(trials: &[Array1<f64>], nonnull_mask: &[bool]) -> Result<StatisticSummary> {
    let pairs: Vec<(&[f64], &[bool])> = trials
        .iter()
        .map(|w| (w.as_slice().expect("owned vectors are contiguous"), nonnull_mask))
        .collect();
    pooled_statistic_summary(&pairs)
}

/// Like [`statistic_distribution_summary`] but each trial carries its own mask.
pub fn pooled_statistic_summary(trials: &[(&[f64], &[bool])]) -> Result<StatisticSummary> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials to summarize"));
    }
    let (mut null, mut nonnull) = (Vec::new(), Vec::new());
    for &(w, mask) in trials {
        if w.len() != mask.len() {
            return Err(Error::shape(mask.len(), w.len()));
        }
        for (&v, &is_signal) in w.iter().zip(mask) {
            if !v.is_finite() {
                return Err(Error::NonFinite("feature statistics".into()));
            }
            if is_signal { nonnull.push(v) } else { null.push(v) }
        }
    }
    Ok(StatisticSummary {
        null: summarize(&null),
        nonnull: summarize(&nonnull),
    })
}

/// Pearson correlation of each original column with its knockoff.
pub fn pairwise_correlations(x: ArrayView2<'_, f64>, xk: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if x.dim() != xk.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    let corr = |a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>| {
        let (ma, mb) = (a.mean().unwrap_or(0.0), b.mean().unwrap_or(0.0));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (u, v) in a.iter().zip(b) {
            sab += (u - ma) * (v - mb);
            saa += (u - ma).powi(2);
            sbb += (v - mb).powi(2);
        }
        if saa == 0.0 || sbb == 0.0 { 0.0 } else { sab / (saa * sbb).sqrt() }
    };
    Ok(Array1::from_iter(x.columns().into_iter().zip(xk.columns()).map(|(a, b)| corr(a, b))))
}
