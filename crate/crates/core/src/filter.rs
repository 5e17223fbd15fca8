//! The knockoff filter: ridge coefficients on `[X, X̃]`, antisymmetric
//! statistics, the data-dependent threshold and scoring against ground truth.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// 13 log-spaced penalties from 1e-3 to 1e3.
pub fn default_penalty_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub penalty_grid: Vec<f64>,
    pub folds: usize,
    /// Center the design and response before solving; the intercept is not
    /// penalized and not reported.
    pub fit_intercept: bool,
    pub seed: u64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            penalty_grid: default_penalty_grid(),
            folds: 5,
            fit_intercept: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub beta: Array1<f64>,
    pub penalty: f64,
    /// Mean held-out squared error per grid value; empty with a single value.
    pub cv_errors: Vec<f64>,
}

fn to_dmatrix(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Solves `min ‖y − Xβ‖² + λ‖β‖²` (with an unpenalized intercept when
/// `fit_intercept`). Returns the slope coefficients and the intercept.
pub fn ridge_solve(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    penalty: f64,
    fit_intercept: bool,
) -> Result<(Array1<f64>, f64)> {
    if x.nrows() != y.len() {
        return Err(Error::shape(x.nrows(), y.len()));
    }
    if !(penalty >= 0.0) {
        return Err(Error::invalid(format!("penalty must be nonnegative, got {penalty}")));
    }
    let (xc, yc, xm, ym) = if fit_intercept {
        let xm = x.mean_axis(Axis(0)).ok_or_else(|| Error::invalid("empty design"))?;
        let ym = y.mean().unwrap_or(0.0);
        (&x - &xm, &y - ym, xm, ym)
    } else {
        (x.to_owned(), y.to_owned(), Array1::zeros(x.ncols()), 0.0)
    };
    let a = to_dmatrix(xc.view());
    let mut gram = a.tr_mul(&a);
    for i in 0..gram.nrows() {
        gram[(i, i)] += penalty;
    }
    let rhs = a.tr_mul(&DVector::from_iterator(yc.len(), yc.iter().copied()));
    let sol = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateSample("ridge system is singular".into()))?,
    };
    let beta = Array1::from_iter(sol.iter().copied());
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge coefficients".into()));
    }
    let intercept = ym - xm.dot(&beta);
    Ok((beta, intercept))
}

/// Ridge with the penalty chosen by k-fold cross-validation, refit on all rows.
pub fn fit_ridge(design: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &RidgeConfig) -> Result<RidgeFit> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::shape(n, y.len()));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge inputs".into()));
    }
    if cfg.penalty_grid.is_empty() || cfg.penalty_grid.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::invalid("penalty grid must be nonempty and nonnegative"));
    }
    let smallest_positive = cfg
        .penalty_grid
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let solve = |x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, l: f64| match ridge_solve(x, y, l, cfg.fit_intercept) {
        Err(Error::DegenerateSample(_) | Error::NonFinite(_)) if l == 0.0 && smallest_positive.is_finite() => {
            log::warn!("ridge system singular at penalty 0; using {smallest_positive}");
            ridge_solve(x, y, smallest_positive, cfg.fit_intercept)
        }
        other => other,
    };
    if cfg.penalty_grid.len() == 1 {
        let penalty = cfg.penalty_grid[0];
        let (beta, _) = solve(design, y, penalty)?;
        return Ok(RidgeFit {
            beta,
            penalty,
            cv_errors: Vec::new(),
        });
    }
    if cfg.folds < 2 || n < cfg.folds {
        return Err(Error::invalid(format!("need 2 <= folds <= n, got folds={} n={n}", cfg.folds)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(cfg.seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % cfg.folds;
    }
    let mut cv_errors = vec![0.0; cfg.penalty_grid.len()];
    for k in 0..cfg.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
        let xt = design.select(Axis(0), &train);
        let yt = y.select(Axis(0), &train);
        let xv = design.select(Axis(0), &test);
        let yv = y.select(Axis(0), &test);
        for (gi, &l) in cfg.penalty_grid.iter().enumerate() {
            let (b, c) = solve(xt.view(), yt.view(), l)?;
            let resid = &yv - &(xv.dot(&b) + c);
            cv_errors[gi] += resid.mapv(|r| r * r).sum() / n as f64;
        }
    }
    let best = cv_errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty grid");
    let penalty = cfg.penalty_grid[best];
    let (beta, _) = solve(design, y, penalty)?;
    Ok(RidgeFit {
        beta,
        penalty,
        cv_errors,
    })
}

/// `w_j = |β̂_j| − |β̂_{j+p}|`.
pub fn knockoff_statistics(beta: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if beta.len() % 2 != 0 {
        return Err(Error::invalid(format!("coefficient vector has odd length {}", beta.len())));
    }
    let p = beta.len() / 2;
    Ok(Array1::from_shape_fn(p, |j| beta[j].abs() - beta[j + p].abs()))
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("q must lie in (0, 1], got {q}")));
    }
    Ok(())
}

/// Smallest `t` among `{|w_j| : w_j ≠ 0}` with
/// `(1 + #{w ≤ −t}) / max(1, #{w ≥ t}) ≤ q`, or `+∞` if none qualifies.
pub fn selection_threshold(w: ArrayView1<'_, f64>, q: f64) -> Result<f64> {
    check_q(q)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("knockoff statistics".into()));
    }
    let mut pos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    let mut neg: Vec<f64> = w.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    // Sweep t upward; `ip`/`ineg` index the first entries >= t.
    let (mut ip, mut ineg) = (0, 0);
    for t in cands {
        while ip < pos.len() && pos[ip] < t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] < t {
            ineg += 1;
        }
        let num = 1 + (neg.len() - ineg);
        let den = (pos.len() - ip).max(1);
        if num as f64 <= q * den as f64 {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// `{j : w_j ≥ τ_q}` in increasing index order.
pub fn select_features(w: ArrayView1<'_, f64>, q: f64) -> Result<Vec<usize>> {
    let tau = selection_threshold(w, q)?;
    Ok(w.iter().enumerate().filter(|&(_, &v)| v >= tau).map(|(j, _)| j).collect())
}

/// `(FDP, power)` of a selection against the true nonnull set.
pub fn evaluate_selection(selected: &[usize], nonnull_mask: &[bool]) -> (f64, f64) {
    let true_pos = selected.iter().filter(|&&j| nonnull_mask.get(j).copied().unwrap_or(false)).count();
    let false_pos = selected.len() - true_pos;
    let nonnulls = nonnull_mask.iter().filter(|&&b| b).count();
    (
        false_pos as f64 / selected.len().max(1) as f64,
        true_pos as f64 / nonnulls.max(1) as f64,
    )
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Provenance recorded with a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SelectionMeta {
    /// `None` when the perturbation was disabled.
    pub drp_alpha: Option<f64>,
    pub drp_seed: Option<u64>,
    pub permutation_digest: Option<String>,
    pub ridge_penalty: f64,
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    /// `+∞` (stored as `null`) when nothing is selected.
    #[serde(with = "inf_as_null")]
    pub tau: f64,
    pub q: f64,
    pub fdp: f64,
    pub power: f64,
    pub w: Vec<f64>,
    pub meta: SelectionMeta,
}

/// Full filter pass: ridge on `[X, X̃]`, statistics, threshold, scoring.
pub fn run_filter(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    nonnull_mask: &[bool],
    q: f64,
    ridge: &RidgeConfig,
) -> Result<SelectionResult> {
    if x.dim() != xk.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    if nonnull_mask.len() != x.ncols() {
        return Err(Error::shape(x.ncols(), nonnull_mask.len()));
    }
    let design = ndarray::concatenate(Axis(1), &[x, xk]).expect("row counts agree");
    let fit = fit_ridge(design.view(), y, ridge)?;
    let w = knockoff_statistics(fit.beta.view())?;
    let tau = selection_threshold(w.view(), q)?;
    let selected: Vec<usize> = w.iter().enumerate().filter(|&(_, &v)| v >= tau).map(|(j, _)| j).collect();
    let (fdp, power) = evaluate_selection(&selected, nonnull_mask);
    Ok(SelectionResult {
        selected,
        tau,
        q,
        fdp,
        power,
        w: w.to_vec(),
        meta: SelectionMeta {
            ridge_penalty: fit.penalty,
            ..Default::default()
        },
    })
}

/// Reference implementation of the threshold by direct enumeration.
pub fn selection_threshold_brute_force(w: &[f64], q: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &c in w {
        let t = c.abs();
        if c == 0.0 || t >= best {
            continue;
        }
        let num = 1 + w.iter().filter(|&&v| v <= -t).count();
        let den = w.iter().filter(|&&v| v >= t).count().max(1);
        if num as f64 / den as f64 <= q {
            best = t;
        }
    }
    best
}
