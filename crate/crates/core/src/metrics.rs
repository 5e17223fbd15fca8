//! Empirical distribution distances: 1D Wasserstein, sliced Wasserstein
//! distance (SWD), sliced Wasserstein correlation (SWC), and linear-kernel MMD.
//!
//! ## Sliced Wasserstein
//!
//! 1. Draw `L` directions uniformly on the sphere (normalized Gaussians).
//! 2. Project both samples onto each direction.
//! 3. Compute the 1D Wasserstein-p distance from sorted projections.
//! 4. Average over directions.
//!
//! ## Sliced Wasserstein correlation
//!
//! The `2n` paired rows are split into halves `I` (rows `0..n`) and `Ĩ`
//! (rows `n..2n`). With `x̃_i = x_{n+i}`:
//!
//! ```text
//! I_xy = {(x_i, y_i)}   Ĩ_xy = {(x̃_i, y_i)}
//! I_xx = {(x_i, x_i)}   Ĩ_xx = {(x̃_i, x_i)}
//! I_yy = {(y_i, y_i)}   Ĩ_yy = {(ỹ_i, y_i)}
//! SWC  = SWD(I_xy, Ĩ_xy) / sqrt(SWD(I_xx, Ĩ_xx) · SWD(I_yy, Ĩ_yy))
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{self, Rng};

/// Transport order `p` of the Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TransportOrder {
    #[serde(rename = "1")]
    W1,
    #[default]
    #[serde(rename = "2")]
    W2,
}

impl TransportOrder {
    pub fn as_f64(self) -> f64 {
        match self {
            TransportOrder::W1 => 1.0,
            TransportOrder::W2 => 2.0,
        }
    }

    pub fn from_int(p: u32) -> Result<Self> {
        match p {
            1 => Ok(TransportOrder::W1),
            2 => Ok(TransportOrder::W2),
            _ => Err(Error::invalid(format!("transport order must be 1 or 2, got {p}"))),
        }
    }

    #[inline]
    fn cost(self, d: f64) -> f64 {
        match self {
            TransportOrder::W1 => d.abs(),
            TransportOrder::W2 => d * d,
        }
    }

    #[inline]
    fn root(self, m: f64) -> f64 {
        match self {
            TransportOrder::W1 => m,
            TransportOrder::W2 => m.sqrt(),
        }
    }
}

pub const DEFAULT_PROJECTIONS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub num_projections: usize,
    pub order: TransportOrder,
    /// Pins the direction draw. `None` draws fresh directions per call.
    pub seed: Option<u64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            num_projections: DEFAULT_PROJECTIONS,
            order: TransportOrder::W2,
            seed: None,
        }
    }
}

impl ProjectionConfig {
    pub fn seeded(num_projections: usize, order: TransportOrder, seed: u64) -> Self {
        Self {
            num_projections,
            order,
            seed: Some(seed),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_projections == 0 {
            return Err(Error::invalid("num_projections must be at least 1"));
        }
        Ok(())
    }

    fn resolve_seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| rand::rng().random())
    }
}

/// An n×d matrix of i.i.d. observations (rows) with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Array2<f64>,
}

impl EmpiricalSample {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::invalid(format!(
                "empirical sample needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::invalid("empirical sample has no columns"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("empirical sample".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// `num` directions in R^d drawn uniformly on the unit sphere, as the columns
/// of a d×num matrix.
pub fn random_directions(d: usize, num: usize, rng: &mut Rng) -> Array2<f64> {
    let mut dirs = Array2::<f64>::zeros((d, num));
    for mut col in dirs.columns_mut() {
        loop {
            for v in col.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = col.dot(&col).sqrt();
            if norm > 1e-12 {
                col /= norm;
                break;
            }
        }
    }
    dirs
}

fn sorted(v: ArrayView1<'_, f64>) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Wasserstein-p distance between the empirical laws of `a` and `b`.
///
/// Equal lengths reduce to the mean cost over matched order statistics.
/// Unequal lengths integrate the piecewise-constant quantile functions over
/// the merged breakpoint grid `{i/na} ∪ {j/nb}`, with exact integer weights.
pub fn wasserstein_1d(a: &[f64], b: &[f64], order: TransportOrder) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("wasserstein_1d needs nonempty inputs"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein_1d input".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    Ok(wasserstein_sorted(&sa, &sb, order))
}

/// As [`wasserstein_1d`] on inputs already sorted ascending.
pub(crate) fn wasserstein_sorted(sa: &[f64], sb: &[f64], order: TransportOrder) -> f64 {
    let (na, nb) = (sa.len(), sb.len());
    if na == nb {
        let m = sa
            .iter()
            .zip(sb)
            .map(|(x, y)| order.cost(x - y))
            .sum::<f64>()
            / na as f64;
        return order.root(m);
    }
    // Breakpoints in units of 1/(na*nb): a-quantile i ends at (i+1)*nb,
    // b-quantile j ends at (j+1)*na.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u128;
    let mut acc = 0.0;
    let total = na as u128 * nb as u128;
    while i < na && j < nb {
        let end_a = (i as u128 + 1) * nb as u128;
        let end_b = (j as u128 + 1) * na as u128;
        let end = end_a.min(end_b);
        acc += order.cost(sa[i] - sb[j]) * (end - prev) as f64;
        prev = end;
        if end_a == end {
            i += 1;
        }
        if end_b == end {
            j += 1;
        }
    }
    order.root(acc / total as f64)
}

/// SWD between projected samples `pa` (na×L) and `pb` (nb×L).
fn projected_distance(pa: &Array2<f64>, pb: &Array2<f64>, order: TransportOrder) -> f64 {
    let l = pa.ncols();
    let per = exec::map_indexed(l, |k| {
        let xa = sorted(pa.column(k));
        let xb = sorted(pb.column(k));
        wasserstein_sorted(&xa, &xb, order)
    });
    per.iter().sum::<f64>() / l as f64
}

/// SWD between row sets of `a` and `b` along the given direction columns.
pub fn swd_with_directions(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    dirs: ArrayView2<'_, f64>,
    order: TransportOrder,
) -> Result<f64> {
    if a.ncols() != b.ncols() || a.ncols() != dirs.nrows() {
        return Err(Error::shape(
            (a.ncols(), a.ncols()),
            (b.ncols(), dirs.nrows()),
        ));
    }
    Ok(projected_distance(&a.dot(&dirs), &b.dot(&dirs), order))
}

/// Value and gradients of the projected SWD for equal-size samples.
///
/// Returns `(value, dL/dpa, dL/dpb)` where `pa`, `pb` are n×L projections.
/// The gradient routes through the sorting permutation; at a zero 1D distance
/// under W2 the subgradient 0 is used.
pub(crate) fn projected_distance_with_grad(
    pa: &Array2<f64>,
    pb: &Array2<f64>,
    order: TransportOrder,
) -> (f64, Array2<f64>, Array2<f64>) {
    let (n, l) = pa.dim();
    debug_assert_eq!(pb.dim(), (n, l));
    let cols = exec::map_indexed(l, |k| {
        let ca = pa.column(k);
        let cb = pb.column(k);
        let mut ia: Vec<usize> = (0..n).collect();
        let mut ib: Vec<usize> = (0..n).collect();
        ia.sort_by(|&x, &y| ca[x].total_cmp(&ca[y]));
        ib.sort_by(|&x, &y| cb[x].total_cmp(&cb[y]));
        let diffs: Vec<f64> = ia.iter().zip(&ib).map(|(&x, &y)| ca[x] - cb[y]).collect();
        let m = diffs.iter().map(|&d| order.cost(d)).sum::<f64>() / n as f64;
        let w = order.root(m);
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        for (r, &d) in diffs.iter().enumerate() {
            let g = match order {
                TransportOrder::W1 => d.signum() * f64::from(d != 0.0) / n as f64,
                TransportOrder::W2 => {
                    if w > 0.0 {
                        d / (n as f64 * w)
                    } else {
                        0.0
                    }
                }
            };
            ga[ia[r]] = g;
            gb[ib[r]] = -g;
        }
        (w, ga, gb)
    });
    let scale = 1.0 / l as f64;
    let mut value = 0.0;
    let mut ga = Array2::<f64>::zeros((n, l));
    let mut gb = Array2::<f64>::zeros((n, l));
    for (k, (w, ca, cb)) in cols.into_iter().enumerate() {
        value += w;
        for r in 0..n {
            ga[[r, k]] = ca[r] * scale;
            gb[[r, k]] = cb[r] * scale;
        }
    }
    (value * scale, ga, gb)
}

/// Monte Carlo sliced Wasserstein distance between two empirical samples.
pub fn sliced_wasserstein_distance(
    a: &EmpiricalSample,
    b: &EmpiricalSample,
    cfg: &ProjectionConfig,
) -> Result<f64> {
    cfg.validate()?;
    if a.ncols() != b.ncols() {
        return Err(Error::shape(a.ncols(), b.ncols()));
    }
    let mut r = rng::rng(cfg.resolve_seed());
    let dirs = random_directions(a.ncols(), cfg.num_projections, &mut r);
    swd_with_directions(a.values(), b.values(), dirs.view(), cfg.order)
}

/// The three distances whose ratio forms the empirical SWC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwcParts {
    pub cross: f64,
    pub self_x: f64,
    pub self_y: f64,
}

impl SwcParts {
    /// Unclamped ratio.
    pub fn raw(&self) -> Result<f64> {
        let den = (self.self_x * self.self_y).sqrt();
        if !(den > 0.0) {
            return Err(Error::DegenerateSample(
                "SWC denominator is zero (a half-sample is degenerate)".into(),
            ));
        }
        Ok(self.cross / den)
    }

    pub fn clamped(&self) -> Result<f64> {
        let raw = self.raw()?;
        if !(-0.05..=1.05).contains(&raw) {
            log::warn!("SWC pre-clamp value {raw:.4} is outside [-0.05, 1.05]");
        }
        Ok(raw.clamp(0.0, 1.0))
    }
}

/// Row pairings used by the SWC estimator, as (I, Ĩ) concatenations.
pub(crate) struct SwcPairings {
    pub xy: (Array2<f64>, Array2<f64>),
    pub xx: (Array2<f64>, Array2<f64>),
    pub yy: (Array2<f64>, Array2<f64>),
}

pub(crate) fn swc_pairings(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> SwcPairings {
    let n = x.nrows() / 2;
    let (x1, x2) = (x.slice(s![..n, ..]), x.slice(s![n..2 * n, ..]));
    let (y1, y2) = (y.slice(s![..n, ..]), y.slice(s![n..2 * n, ..]));
    let cat = |a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>| {
        concatenate(Axis(1), &[a, b]).expect("row counts agree")
    };
    SwcPairings {
        xy: (cat(x1, y1), cat(x2, y1)),
        xx: (cat(x1, x1), cat(x2, x1)),
        yy: (cat(y1, y1), cat(y2, y1)),
    }
}

pub(crate) fn check_swc_inputs(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape(x.nrows(), y.nrows()));
    }
    if x.nrows() % 2 != 0 {
        return Err(Error::invalid(format!(
            "SWC needs an even row count, got {}",
            x.nrows()
        )));
    }
    if x.nrows() < 4 {
        return Err(Error::invalid("SWC needs at least 4 rows"));
    }
    Ok(())
}

/// Direction sets for the three SWC distances. Pairings of equal dimension
/// share one draw, so `SWC(X, X)` is exactly one.
pub(crate) fn swc_directions(
    dx: usize,
    dy: usize,
    num: usize,
    seed: u64,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let draw = |d: usize| random_directions(d, num, &mut rng::rng(seed));
    let xy = draw(dx + dy);
    let xx = if 2 * dx == dx + dy { xy.clone() } else { draw(2 * dx) };
    let yy = if 2 * dy == dx + dy { xy.clone() } else { draw(2 * dy) };
    (xy, xx, yy)
}

/// The numerator and denominator distances of the empirical SWC.
pub fn swc_parts(
    x: &EmpiricalSample,
    y: &EmpiricalSample,
    cfg: &ProjectionConfig,
) -> Result<SwcParts> {
    cfg.validate()?;
    check_swc_inputs(x.values(), y.values())?;
    let pairs = swc_pairings(x.values(), y.values());
    let (dxy, dxx, dyy) = swc_directions(x.ncols(), y.ncols(), cfg.num_projections, cfg.resolve_seed());
    let d = |(a, b): &(Array2<f64>, Array2<f64>), dirs: &Array2<f64>| {
        projected_distance(&a.dot(dirs), &b.dot(dirs), cfg.order)
    };
    Ok(SwcParts {
        cross: d(&pairs.xy, &dxy),
        self_x: d(&pairs.xx, &dxx),
        self_y: d(&pairs.yy, &dyy),
    })
}

/// Empirical sliced Wasserstein correlation, clamped to `[0, 1]`.
pub fn sliced_wasserstein_correlation(
    x: &EmpiricalSample,
    y: &EmpiricalSample,
    cfg: &ProjectionConfig,
) -> Result<f64> {
    swc_parts(x, y, cfg)?.clamped()
}

/// Linear-kernel MMD²: squared distance between column means.
pub fn mmd_linear(a: &EmpiricalSample, b: &EmpiricalSample) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(a.ncols(), b.ncols()));
    }
    Ok(mmd_linear_views(a.values(), b.values()))
}

pub(crate) fn mmd_linear_views(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let ma: Array1<f64> = a.mean_axis(Axis(0)).expect("nonempty");
    let mb: Array1<f64> = b.mean_axis(Axis(0)).expect("nonempty");
    let d = ma - mb;
    d.dot(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn sample(v: Array2<f64>) -> EmpiricalSample {
        EmpiricalSample::new(v).unwrap()
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::rng(seed);
        Array2::from_shape_fn((n, d), |_| r.sample(StandardNormal))
    }

    #[test]
    fn w1d_examples() {
        use TransportOrder::W1;
        assert_eq!(wasserstein_1d(&[1., 2., 3.], &[1., 2., 3.], W1).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.], &[1.], W1).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0., 2.], &[1., 3.], W1).unwrap(), 1.0);
        assert!(wasserstein_1d(&[], &[1.], W1).is_err());
    }

    #[test]
    fn w1d_unequal_lengths_by_hand() {
        // F_a^{-1} = 0 on (0, 1/2], 1 on (1/2, 1]; F_b^{-1} = 0 on (0, 1/3],
        // 3 on (1/3, 1]. |diff| = 0, 3, 2 on lengths 1/3, 1/6, 1/2.
        let w = wasserstein_1d(&[0., 1.], &[0., 3., 3.], TransportOrder::W1).unwrap();
        assert!((w - (0.5 + 1.0)).abs() < 1e-15);
        let w2 = wasserstein_1d(&[0., 1.], &[0., 3., 3.], TransportOrder::W2).unwrap();
        assert!((w2 - (9.0 / 6.0 + 4.0 / 2.0_f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn swd_identical_is_zero() {
        let a = sample(gaussian(50, 4, 1));
        let cfg = ProjectionConfig::seeded(64, TransportOrder::W1, 3);
        assert_eq!(sliced_wasserstein_distance(&a, &a, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn swd_two_points_matches_mean_abs_cos() {
        // Mean of |cos| on the circle is 2/pi.
        let a = sample(array![[1.0, 0.0], [1.0, 0.0]]);
        let b = sample(array![[0.0, 0.0], [0.0, 0.0]]);
        let cfg = ProjectionConfig::seeded(10_000, TransportOrder::W1, 11);
        let v = sliced_wasserstein_distance(&a, &b, &cfg).unwrap();
        // Dense grid cross-check of the analytic value.
        let grid: f64 = (0..100_000)
            .map(|k| (2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 1e5).cos().abs())
            .sum::<f64>()
            / 1e5;
        assert!((grid - 2.0 / std::f64::consts::PI).abs() < 1e-9);
        // Monte Carlo standard error of |cos| is ~0.31/sqrt(1e4).
        assert!((v - grid).abs() < 0.015, "{v}");
    }

    #[test]
    fn swd_shift_in_1d() {
        let a = gaussian(500, 1, 5);
        let b = &a + 1.7;
        let cfg = ProjectionConfig::seeded(8, TransportOrder::W1, 2);
        let v = sliced_wasserstein_distance(&sample(a), &sample(b), &cfg).unwrap();
        assert!((v - 1.7).abs() < 1e-12);
    }

    #[test]
    fn swd_dimension_mismatch() {
        let cfg = ProjectionConfig::default();
        let r = sliced_wasserstein_distance(&sample(gaussian(5, 2, 1)), &sample(gaussian(5, 3, 1)), &cfg);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn swd_triangle_inequality_within_noise() {
        let a = sample(gaussian(200, 3, 1));
        let b = sample(gaussian(200, 3, 2) + 0.5);
        let c = sample(gaussian(200, 3, 3) * 1.5);
        // Independent direction draws per term; the spread over seeds sets ε.
        let vals = |x: &EmpiricalSample, y: &EmpiricalSample| -> Vec<f64> {
            (0..20)
                .map(|s| sliced_wasserstein_distance(x, y, &ProjectionConfig::seeded(128, TransportOrder::W2, s)).unwrap())
                .collect()
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let (ac, ab, bc) = (vals(&a, &c), vals(&a, &b), vals(&b, &c));
        let eps = 3.0 * (sd(&ac) + sd(&ab) + sd(&bc));
        for s in 0..20 {
            assert!(ac[s] <= ab[s] + bc[s] + eps);
        }
    }

    #[test]
    fn swc_of_identical_is_exactly_one() {
        let x = sample(gaussian(400, 5, 9));
        for seed in 0..5 {
            let cfg = ProjectionConfig::seeded(64, TransportOrder::W2, seed);
            assert_eq!(sliced_wasserstein_correlation(&x, &x, &cfg).unwrap(), 1.0);
            let cfg1 = ProjectionConfig::seeded(64, TransportOrder::W1, seed);
            assert_eq!(sliced_wasserstein_correlation(&x, &x, &cfg1).unwrap(), 1.0);
        }
    }

    #[test]
    fn swc_affine_dependence_is_high() {
        let xv = gaussian(2000, 10, 4);
        let y = sample(&xv * 2.0 + 1.0);
        let x = sample(xv);
        let cfg = ProjectionConfig::seeded(128, TransportOrder::W2, 1);
        let v = sliced_wasserstein_correlation(&x, &y, &cfg).unwrap();
        // Monte Carlo over seeds puts this estimator near 0.89-0.92 at this size.
        assert!(v > 0.85, "{v}");
    }

    #[test]
    fn swc_noise_floor_shrinks_with_n() {
        // Independent halves: the estimator is biased upward by finite-sample
        // transport noise; the bias must shrink as n grows.
        let cfg = ProjectionConfig::seeded(128, TransportOrder::W2, 3);
        let floor = |n: usize| -> f64 {
            (0..5)
                .map(|s| {
                    let x = sample(gaussian(n, 10, 100 + s));
                    let y = sample(gaussian(n, 10, 200 + s));
                    sliced_wasserstein_correlation(&x, &y, &cfg).unwrap()
                })
                .sum::<f64>()
                / 5.0
        };
        let (small, large) = (floor(500), floor(4000));
        assert!(large < small, "{small} {large}");
        assert!(large < 0.45, "{large}");
    }

    #[test]
    fn swc_errors() {
        let cfg = ProjectionConfig::default();
        let odd = sample(gaussian(5, 2, 1));
        assert!(matches!(
            sliced_wasserstein_correlation(&odd, &odd, &cfg),
            Err(Error::InvalidArgument(_))
        ));
        let constant = sample(Array2::ones((6, 2)));
        assert!(matches!(
            sliced_wasserstein_correlation(&constant, &constant, &cfg),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn mmd_examples() {
        let a = sample(array![[1.0, 1.0], [-1.0, -1.0]]);
        let b = sample(array![[3.0, 4.0], [3.0, 4.0]]);
        assert_eq!(mmd_linear(&a, &a).unwrap(), 0.0);
        assert_eq!(mmd_linear(&a, &b).unwrap(), 25.0);
    }

    #[test]
    fn mmd_matches_kernel_double_sum() {
        let a = gaussian(30, 4, 1);
        let b = gaussian(40, 4, 2) + 0.3;
        let k = |u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>| u.dot(&v);
        let mean_k = |x: &Array2<f64>, y: &Array2<f64>| {
            let mut s = 0.0;
            for u in x.rows() {
                for v in y.rows() {
                    s += k(u, v);
                }
            }
            s / (x.nrows() * y.nrows()) as f64
        };
        let oracle = mean_k(&a, &a) + mean_k(&b, &b) - 2.0 * mean_k(&a, &b);
        let v = mmd_linear(&sample(a), &sample(b)).unwrap();
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn projected_grad_matches_finite_differences() {
        let mut r = rng::rng(5);
        let pa = Array2::from_shape_fn((7, 3), |_| r.sample::<f64, _>(StandardNormal));
        let pb = Array2::from_shape_fn((7, 3), |_| r.sample::<f64, _>(StandardNormal));
        for order in [TransportOrder::W1, TransportOrder::W2] {
            let (_, ga, gb) = projected_distance_with_grad(&pa, &pb, order);
            let h = 1e-7;
            for idx in [(0, 0), (3, 1), (6, 2)] {
                let mut p = pa.clone();
                p[idx] += h;
                let mut m = pa.clone();
                m[idx] -= h;
                let fd = (projected_distance(&p, &pb, order) - projected_distance(&m, &pb, order)) / (2.0 * h);
                assert!((fd - ga[idx]).abs() < 1e-6, "{order:?} {fd} {}", ga[idx]);
                let mut p = pb.clone();
                p[idx] += h;
                let mut m = pb.clone();
                m[idx] -= h;
                let fd = (projected_distance(&pa, &p, order) - projected_distance(&pa, &m, order)) / (2.0 * h);
                assert!((fd - gb[idx]).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn w1d_is_symmetric(
            a in prop::collection::vec(-1e3f64..1e3, 1..40),
            b in prop::collection::vec(-1e3f64..1e3, 1..40),
        ) {
            for order in [TransportOrder::W1, TransportOrder::W2] {
                let ab = wasserstein_1d(&a, &b, order).unwrap();
                let ba = wasserstein_1d(&b, &a, order).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= 0.0);
            }
        }

        #[test]
        fn w1d_zero_on_permutations(mut a in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let b = a.clone();
            a.reverse();
            prop_assert_eq!(wasserstein_1d(&a, &b, TransportOrder::W1).unwrap(), 0.0);
        }
    }
}
