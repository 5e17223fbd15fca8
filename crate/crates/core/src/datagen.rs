//! Synthetic design matrices and responses.
//!
//! Gaussian mixtures with AR(1)-style component covariances, exchangeable
//! Archimedean copulas (Clayton, Joe) via the frailty construction, sparse
//! Rademacher coefficients, linear and tanh responses, column
//! standardization, train/validation splits, and an independent-resample
//! knockoff used as a ground-truth oracle in tests.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub type DesignMatrix = Array2<f64>;
pub type KnockoffMatrix = Array2<f64>;

/// Three-component Gaussian mixture. Component `k` (1-based) has mean
/// `mean_step·(k−1)·1_p` and covariance entries `ρ_k^|i−j|` with
/// `ρ_k = rho_base^(k−0.1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub weights: [f64; 3],
    pub mean_step: f64,
    pub rho_base: f64,
}

impl Default for GaussianMixtureSpec {
    fn default() -> Self {
        Self {
            weights: [0.4, 0.2, 0.4],
            mean_step: 20.0,
            rho_base: 0.6,
        }
    }
}

/// The ten mixture-weight sets of the robustness benchmark, in table order.
pub const MIXTURE_WEIGHT_PRESETS: [[f64; 3]; 10] = [
    [0.562, 0.384, 0.054],
    [0.430, 0.168, 0.402],
    [0.317, 0.324, 0.359],
    [0.316, 0.388, 0.296],
    [0.439, 0.488, 0.073],
    [0.314, 0.041, 0.645],
    [0.656, 0.282, 0.062],
    [0.200, 0.300, 0.500],
    [0.500, 0.300, 0.200],
    [0.333, 0.333, 0.333],
];

impl GaussianMixtureSpec {
    /// Mixture preset `1..=10`.
    ///
    /// Preset weights are printed to three decimals and may miss the simplex
    /// by up to 1e-3 (preset 10 sums to 0.999); they are renormalized.
    pub fn preset(index: usize) -> Result<Self> {
        let w = MIXTURE_WEIGHT_PRESETS
            .get(index.wrapping_sub(1))
            .ok_or_else(|| Error::invalid(format!("mixture preset must be 1..=10, got {index}")))?;
        let s: f64 = w.iter().sum();
        Ok(Self {
            weights: [w[0] / s, w[1] / s, w[2] / s],
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {s}, not 1")));
        }
        if !(self.rho_base > 0.0 && self.rho_base < 1.0) {
            return Err(Error::invalid(format!("rho_base must lie in (0, 1), got {}", self.rho_base)));
        }
        Ok(())
    }

    /// Lag-one correlation of component `k` (1-based).
    pub fn component_rho(&self, k: usize) -> f64 {
        self.rho_base.powf(k as f64 - 0.1)
    }

    pub fn component_mean(&self, k: usize) -> f64 {
        self.mean_step * (k as f64 - 1.0)
    }

    /// Dense covariance of component `k`; used by tests and diagnostics.
    pub fn component_covariance(&self, k: usize, p: usize) -> Array2<f64> {
        let rho = self.component_rho(k);
        Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
    }
}

fn check_shape(n: usize, p: usize) -> Result<()> {
    if n < 2 || p < 2 {
        return Err(Error::invalid(format!("need n >= 2 and p >= 2, got n={n}, p={p}")));
    }
    Ok(())
}

/// Draws `n` rows from the mixture.
///
/// Within a component, `ρ^|i−j|` is the covariance of a unit-variance AR(1)
/// chain, so rows are generated by the recursion
/// `x_1 = e_1`, `x_j = ρ·x_{j−1} + sqrt(1−ρ²)·e_j`, which is exact.
pub fn sample_gaussian_mixture(spec: &GaussianMixtureSpec, n: usize, p: usize, seed: u64) -> Result<DesignMatrix> {
    spec.validate()?;
    check_shape(n, p)?;
    let mut r = rng::rng(seed);
    let mut x = Array2::<f64>::zeros((n, p));
    let cum = [spec.weights[0], spec.weights[0] + spec.weights[1]];
    for mut row in x.rows_mut() {
        let u: f64 = r.random();
        let k = if u < cum[0] {
            1
        } else if u < cum[1] {
            2
        } else {
            3
        };
        let rho = spec.component_rho(k);
        let innov = (1.0 - rho * rho).sqrt();
        let mu = spec.component_mean(k);
        let mut prev: f64 = r.sample(StandardNormal);
        row[0] = mu + prev;
        for j in 1..p {
            let e: f64 = r.sample(StandardNormal);
            prev = rho * prev + innov * e;
            row[j] = mu + prev;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Clayton,
    Joe,
}

impl std::str::FromStr for CopulaFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clayton" => Ok(CopulaFamily::Clayton),
            "joe" => Ok(CopulaFamily::Joe),
            other => Err(Error::invalid(format!("unsupported copula family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Marginal {
    #[default]
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub theta: f64,
    pub marginal: Marginal,
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, marginal: Marginal) -> Self {
        Self {
            family,
            theta: 2.0,
            marginal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.family {
            CopulaFamily::Clayton => self.theta > 0.0,
            CopulaFamily::Joe => self.theta >= 1.0,
        };
        if !ok || !self.theta.is_finite() {
            return Err(Error::invalid(format!(
                "theta={} is outside the {:?} parameter range",
                self.theta, self.family
            )));
        }
        Ok(())
    }

    /// Kendall's tau of any bivariate margin.
    pub fn kendall_tau(&self) -> f64 {
        let t = self.theta;
        match self.family {
            CopulaFamily::Clayton => t / (t + 2.0),
            CopulaFamily::Joe => {
                // 1 - 4 Σ_k 1/(k (θk + 2)(θ(k−1) + 2)); terms decay like k^-3.
                let mut s = 0.0;
                for k in 1..200_000u32 {
                    let k = k as f64;
                    s += 1.0 / (k * (t * k + 2.0) * (t * (k - 1.0) + 2.0));
                }
                1.0 - 4.0 * s
            }
        }
    }
}

/// Sibuya(α) draw, α ∈ (0, 1]. `P(V = 1) = α`; inversion of the tail
/// `1 − F(n) = 1/(n·B(n, 1−α))` with a floor/ceil correction.
pub(crate) fn sample_sibuya(alpha: f64, r: &mut Rng) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if alpha >= 1.0 {
        return 1.0;
    }
    let u: f64 = r.random();
    if u <= alpha {
        return 1.0;
    }
    let gamma_1a = ln_gamma(1.0 - alpha).exp();
    let ginv = ((1.0 - u) * gamma_1a).powf(-1.0 / alpha);
    let fginv = ginv.floor();
    if ginv > 1.0 / f64::EPSILON {
        return fginv;
    }
    let ln_beta = ln_gamma(fginv) + ln_gamma(1.0 - alpha) - ln_gamma(fginv + 1.0 - alpha);
    if 1.0 - u < 1.0 / (fginv * ln_beta.exp()) {
        ginv.ceil()
    } else {
        fginv
    }
}

/// Exchangeable Archimedean copula sample via the Marshall–Olkin frailty
/// construction: `U_j = ψ(E_j / V)` with `E_j ~ Exp(1)` and frailty `V`
/// (Gamma(1/θ) for Clayton, Sibuya(1/θ) for Joe), then the marginal map.
pub fn sample_archimedean_copula(spec: &CopulaSpec, n: usize, p: usize, seed: u64) -> Result<DesignMatrix> {
    spec.validate()?;
    check_shape(n, p)?;
    let mut r = rng::rng(seed);
    let theta = spec.theta;
    let gamma = Gamma::new(1.0 / theta, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut x = Array2::<f64>::zeros((n, p));
    for mut row in x.rows_mut() {
        let v = match spec.family {
            CopulaFamily::Clayton => gamma.sample(&mut r),
            CopulaFamily::Joe => sample_sibuya(1.0 / theta, &mut r),
        };
        for u in row.iter_mut() {
            let e: f64 = Exp1.sample(&mut r);
            let t = e / v;
            let uv = match spec.family {
                CopulaFamily::Clayton => (1.0 + t).powf(-1.0 / theta),
                // 1 − (1 − e^{−t})^{1/θ}, written to keep precision near 0.
                CopulaFamily::Joe => -((-(-t).exp_m1()).ln() / theta).exp_m1(),
            };
            *u = match spec.marginal {
                Marginal::Uniform => uv,
                Marginal::Exponential => -(-uv).ln_1p(),
            };
        }
    }
    Ok(x)
}

/// Sparse coefficient rule: `num_nonnull` indices chosen uniformly, each with
/// magnitude `p / (scale_divisor·√n)` and a fair random sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub scale_divisor: f64,
    pub num_nonnull: usize,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            scale_divisor: 15.0,
            num_nonnull: 20,
        }
    }
}

impl CoefficientSpec {
    pub fn amplitude(&self, n: usize, p: usize) -> f64 {
        p as f64 / (self.scale_divisor * (n as f64).sqrt())
    }
}

pub fn sample_coefficients(spec: &CoefficientSpec, n: usize, p: usize, seed: u64) -> Result<(Array1<f64>, Vec<bool>)> {
    if spec.num_nonnull > p {
        return Err(Error::invalid(format!(
            "num_nonnull={} exceeds p={p}",
            spec.num_nonnull
        )));
    }
    if !(spec.scale_divisor > 0.0) {
        return Err(Error::invalid("scale_divisor must be positive"));
    }
    let mut r = rng::rng(seed);
    let amp = spec.amplitude(n, p);
    let mut beta = Array1::<f64>::zeros(p);
    let mut mask = vec![false; p];
    let mut idx = index::sample(&mut r, p, spec.num_nonnull).into_vec();
    idx.sort_unstable();
    for j in idx {
        beta[j] = if r.random_bool(0.5) { amp } else { -amp };
        mask[j] = true;
    }
    Ok((beta, mask))
}

fn check_rows(x: ArrayView2<'_, f64>, len: usize, what: &str) -> Result<()> {
    if x.ncols() != len {
        return Err(Error::shape(format!("{what} of length {}", x.ncols()), len));
    }
    Ok(())
}

/// `Y = Xβ* + noise_scale·ε`, ε iid standard normal. `noise_scale = 0` gives
/// the noiseless response.
pub fn synthesize_linear_response_scaled(
    x: ArrayView2<'_, f64>,
    beta_star: &Array1<f64>,
    noise_scale: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    check_rows(x, beta_star.len(), "beta")?;
    let mut r = rng::rng(seed);
    let mut y = x.dot(beta_star);
    for v in y.iter_mut() {
        let e: f64 = r.sample(StandardNormal);
        *v += noise_scale * e;
    }
    Ok(y)
}

pub fn synthesize_linear_response(x: ArrayView2<'_, f64>, beta_star: &Array1<f64>, seed: u64) -> Result<Array1<f64>> {
    synthesize_linear_response_scaled(x, beta_star, 1.0, seed)
}

/// Random parameters of the grouped tanh response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhResponseModel {
    /// Chosen covariates, consecutive blocks of four form one group.
    pub covariates: Vec<usize>,
    /// Per group `(φ1, φ2, φ3, φ4, φ5)`.
    pub phis: Vec<[f64; 5]>,
}

impl TanhResponseModel {
    pub fn sample(p: usize, m: usize, r: &mut Rng) -> Result<Self> {
        if m % 4 != 0 {
            return Err(Error::invalid(format!("m={m} is not divisible by 4")));
        }
        if m > p {
            return Err(Error::invalid(format!("m={m} exceeds p={p}")));
        }
        let covariates = index::sample(r, p, m).into_vec();
        let n11 = Normal::new(1.0, 1.0).expect("valid normal");
        let n21 = Normal::new(2.0, 1.0).expect("valid normal");
        let phis = (0..m / 4)
            .map(|_| {
                let (a, b) = (n11.sample(r), n11.sample(r));
                let (c, d, e) = (n21.sample(r), n21.sample(r), n21.sample(r));
                [a, b, c, d, e]
            })
            .collect();
        Ok(Self { covariates, phis })
    }

    pub fn nonnull_mask(&self, p: usize) -> Vec<bool> {
        let mut mask = vec![false; p];
        for &j in &self.covariates {
            mask[j] = true;
        }
        mask
    }

    /// Noise-free part of the response for each row.
    pub fn signal(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut y = Array1::<f64>::zeros(x.nrows());
        for (g, phi) in self.phis.iter().enumerate() {
            let c = &self.covariates[4 * g..4 * g + 4];
            for (i, row) in x.rows().into_iter().enumerate() {
                y[i] += phi[0] * row[c[0]]
                    + phi[2] * row[c[1]]
                    + phi[3] * (phi[1] * row[c[2]] + phi[4] * row[c[3]]).tanh();
            }
        }
        y
    }
}

/// Grouped nonlinear response: `m` covariates in blocks of four, each block
/// contributing `φ1·X_a + φ3·X_b + φ4·tanh(φ2·X_c + φ5·X_d)`, plus N(0,1) noise.
pub fn synthesize_tanh_response(x: ArrayView2<'_, f64>, m: usize, seed: u64) -> Result<(Array1<f64>, Vec<bool>)> {
    let mut r = rng::rng(seed);
    let model = TanhResponseModel::sample(x.ncols(), m, &mut r)?;
    let mut y = model.signal(x);
    for v in y.iter_mut() {
        let e: f64 = r.sample(StandardNormal);
        *v += e;
    }
    Ok((y, model.nonnull_mask(x.ncols())))
}

/// Column means and population standard deviations.
pub fn column_moments(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let var = x
        .axis_iter(Axis(1))
        .zip(mean.iter())
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
        .collect::<Array1<f64>>();
    (mean, var.mapv(f64::sqrt))
}

/// Zero mean, unit population variance per column.
pub fn standardize_columns(x: ArrayView2<'_, f64>) -> Result<DesignMatrix> {
    let (mean, sd) = column_moments(x);
    for (j, (&s, &m)) in sd.iter().zip(mean.iter()).enumerate() {
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::DegenerateColumn(j));
        }
    }
    Ok((&x - &mean.view().insert_axis(Axis(0))) / &sd.view().insert_axis(Axis(0)))
}

/// Row indices of a train/validation split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    pub fn new(n: usize, ratio: f64, seed: u64) -> Result<Self> {
        if n < 5 {
            return Err(Error::invalid(format!("need at least 5 rows to split, got {n}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid(format!("split ratio must lie in (0, 1), got {ratio}")));
        }
        let n_train = ((n as f64 * ratio) - 1e-9).ceil() as usize;
        let n_train = n_train.clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::rng(seed));
        let val = order.split_off(n_train);
        Ok(Self { train: order, val })
    }
}

pub fn split_train_val(x: ArrayView2<'_, f64>, ratio: f64, seed: u64) -> Result<(DesignMatrix, DesignMatrix)> {
    let split = Split::new(x.nrows(), ratio, seed)?;
    Ok((x.select(Axis(0), &split.train), x.select(Axis(0), &split.val)))
}

/// Each column independently and uniformly permuted. An exact knockoff when
/// the columns of `x` are independent.
pub fn oracle_knockoff_independent(x: ArrayView2<'_, f64>, seed: u64) -> KnockoffMatrix {
    let mut r = rng::rng(seed);
    let mut out = x.to_owned();
    let mut perm: Vec<usize> = (0..x.nrows()).collect();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        perm.shuffle(&mut r);
        for (i, &src) in perm.iter().enumerate() {
            col[i] = x[[src, j]];
        }
    }
    out
}

/// A generated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub x: DesignMatrix,
    pub y: Array1<f64>,
    pub beta_star: Array1<f64>,
    pub nonnull_mask: Vec<bool>,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_uniform(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter()
            .enumerate()
            .map(|(i, &u)| ((i as f64 + 1.0) / n - u).max(u - i as f64 / n))
            .fold(0.0, f64::max)
    }

    fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                let c = (a[i] - a[j]) * (b[i] - b[j]);
                s += if c > 0.0 { 1 } else if c < 0.0 { -1 } else { 0 };
            }
        }
        s as f64 / (n * (n - 1) / 2) as f64
    }

    #[test]
    fn mixture_component_parameters() {
        let spec = GaussianMixtureSpec::default();
        for k in 1..=3 {
            let c = spec.component_covariance(k, 5);
            assert!(c.diag().iter().all(|&d| d == 1.0));
        }
        let rhos: Vec<f64> = (1..=3).map(|k| spec.component_rho(k)).collect();
        for (r, e) in rhos.iter().zip([0.6314, 0.3789, 0.2273]) {
            assert!((r - e).abs() < 5e-5, "{r} vs {e}");
        }
        let means: Vec<f64> = (1..=3).map(|k| spec.component_mean(k)).collect();
        assert_eq!(means, vec![0.0, 20.0, 40.0]);
    }

    #[test]
    fn mixture_presets_verbatim() {
        assert_eq!(MIXTURE_WEIGHT_PRESETS[7], [0.200, 0.300, 0.500]);
        for i in 1..=10 {
            GaussianMixtureSpec::preset(i).unwrap().validate().unwrap();
        }
        assert!(GaussianMixtureSpec::preset(0).is_err());
        assert!(GaussianMixtureSpec::preset(11).is_err());
    }

    #[test]
    fn mixture_rejects_bad_simplex() {
        let spec = GaussianMixtureSpec {
            weights: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(matches!(sample_gaussian_mixture(&spec, 10, 3, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mixture_pooled_mean() {
        let spec = GaussianMixtureSpec::default();
        let x = sample_gaussian_mixture(&spec, 5000, 4, 7).unwrap();
        let expected: f64 = (1..=3).map(|k| spec.weights[k - 1] * spec.component_mean(k)).sum();
        let (mean, sd) = column_moments(x.view());
        for j in 0..4 {
            let se = sd[j] / (5000f64).sqrt();
            assert!((mean[j] - expected).abs() < 3.0 * se, "{} vs {expected}", mean[j]);
        }
    }

    #[test]
    fn mixture_within_component_correlation() {
        // Single-component mixture: lag-1 correlation must be rho_1.
        let spec = GaussianMixtureSpec {
            weights: [1.0, 0.0, 0.0],
            ..Default::default()
        };
        let x = sample_gaussian_mixture(&spec, 20_000, 3, 3).unwrap();
        let (m, s) = column_moments(x.view());
        let c01 = x
            .rows()
            .into_iter()
            .map(|r| (r[0] - m[0]) * (r[1] - m[1]))
            .sum::<f64>()
            / 20_000.0
            / (s[0] * s[1]);
        let c02 = x
            .rows()
            .into_iter()
            .map(|r| (r[0] - m[0]) * (r[2] - m[2]))
            .sum::<f64>()
            / 20_000.0
            / (s[0] * s[2]);
        let rho = spec.component_rho(1);
        assert!((c01 - rho).abs() < 0.02);
        assert!((c02 - rho * rho).abs() < 0.02);
    }

    #[test]
    fn generators_are_reproducible() {
        let spec = GaussianMixtureSpec::default();
        assert_eq!(
            sample_gaussian_mixture(&spec, 20, 4, 9).unwrap(),
            sample_gaussian_mixture(&spec, 20, 4, 9).unwrap()
        );
        let c = CopulaSpec::new(CopulaFamily::Joe, Marginal::Exponential);
        assert_eq!(
            sample_archimedean_copula(&c, 20, 4, 9).unwrap(),
            sample_archimedean_copula(&c, 20, 4, 9).unwrap()
        );
    }

    #[test]
    fn copula_uniform_marginals_pass_ks() {
        // KS critical value at level 0.01 is 1.628/sqrt(n).
        let crit = 1.628 / (5000f64).sqrt();
        for family in [CopulaFamily::Clayton, CopulaFamily::Joe] {
            let x = sample_archimedean_copula(&CopulaSpec::new(family, Marginal::Uniform), 5000, 3, 21).unwrap();
            for col in x.columns() {
                let d = ks_uniform(col.to_vec());
                assert!(d < crit, "{family:?}: D={d}");
            }
        }
    }

    #[test]
    fn copula_kendall_tau() {
        for family in [CopulaFamily::Clayton, CopulaFamily::Joe] {
            let spec = CopulaSpec::new(family, Marginal::Uniform);
            let x = sample_archimedean_copula(&spec, 5000, 2, 5).unwrap();
            let tau = kendall_tau(&x.column(0).to_vec(), &x.column(1).to_vec());
            assert!((tau - spec.kendall_tau()).abs() < 0.05, "{family:?}: {tau} vs {}", spec.kendall_tau());
        }
        assert!((CopulaSpec::new(CopulaFamily::Clayton, Marginal::Uniform).kendall_tau() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn copula_exponential_means() {
        for family in [CopulaFamily::Clayton, CopulaFamily::Joe] {
            let x = sample_archimedean_copula(&CopulaSpec::new(family, Marginal::Exponential), 5000, 3, 8).unwrap();
            let (m, _) = column_moments(x.view());
            assert!(m.iter().all(|v| (v - 1.0).abs() < 0.05), "{family:?}: {m}");
        }
    }

    #[test]
    fn copula_family_parsing_and_range() {
        assert!("gumbel".parse::<CopulaFamily>().is_err());
        let bad = CopulaSpec {
            theta: 0.5,
            ..CopulaSpec::new(CopulaFamily::Joe, Marginal::Uniform)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sibuya_point_masses() {
        let alpha = 0.5;
        let mut r = rng::rng(4);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_sibuya(alpha, &mut r)).collect();
        let p1 = draws.iter().filter(|&&v| v == 1.0).count() as f64 / n as f64;
        let p2 = draws.iter().filter(|&&v| v == 2.0).count() as f64 / n as f64;
        let p3 = draws.iter().filter(|&&v| v == 3.0).count() as f64 / n as f64;
        // (−1)^{k+1} C(α, k): α, α(1−α)/2, α(1−α)(2−α)/6.
        assert!((p1 - 0.5).abs() < 0.005);
        assert!((p2 - 0.125).abs() < 0.004);
        assert!((p3 - 0.0625).abs() < 0.003);
        assert!(draws.iter().all(|&v| v >= 1.0 && v.fract() == 0.0));
    }

    #[test]
    fn coefficient_examples() {
        let spec = CoefficientSpec::default();
        assert!((spec.amplitude(200, 100) - 0.4714).abs() < 1e-4);
        assert!((spec.amplitude(2000, 100) - 0.1491).abs() < 1e-4);
        let (b, m) = sample_coefficients(&CoefficientSpec { num_nonnull: 0, ..spec }, 200, 100, 1).unwrap();
        assert!(b.iter().all(|&v| v == 0.0) && m.iter().all(|&v| !v));
        let (b, m) = sample_coefficients(&spec, 200, 100, 1).unwrap();
        assert_eq!(b.iter().filter(|&&v| v != 0.0).count(), 20);
        for (bj, mj) in b.iter().zip(&m) {
            assert_eq!(*bj != 0.0, *mj);
        }
        assert!(sample_coefficients(&CoefficientSpec { num_nonnull: 101, ..spec }, 200, 100, 1).is_err());
    }

    #[test]
    fn coefficient_signs_balanced() {
        // Binomial test at level 0.001: |pos − N/2| < 3.29·sqrt(N)/2.
        let spec = CoefficientSpec {
            num_nonnull: 1,
            ..Default::default()
        };
        let n = 10_000;
        let pos = (0..n)
            .filter(|&s| sample_coefficients(&spec, 100, 10, s as u64).unwrap().0.iter().any(|&v| v > 0.0))
            .count() as f64;
        assert!((pos - n as f64 / 2.0).abs() < 3.29 * (n as f64).sqrt() / 2.0, "{pos}");
    }

    #[test]
    fn linear_response() {
        let x = Array2::from_shape_fn((5000, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
        let beta = Array1::from(vec![1.0, -2.0, 0.5]);
        let clean = synthesize_linear_response_scaled(x.view(), &beta, 0.0, 3).unwrap();
        assert_eq!(clean, x.dot(&beta));
        let y = synthesize_linear_response(x.view(), &beta, 3).unwrap();
        let resid = &y - &clean;
        let m = resid.mean().unwrap();
        let v = resid.mapv(|r| (r - m).powi(2)).mean().unwrap();
        assert!((v - 1.0).abs() < 0.1);
        let y0 = synthesize_linear_response(x.view(), &Array1::zeros(3), 4).unwrap();
        assert!(y0.mean().unwrap().abs() < 3.0 / (5000f64).sqrt());
        assert!(synthesize_linear_response(x.view(), &Array1::zeros(2), 4).is_err());
    }

    #[test]
    fn tanh_response() {
        let mut r = rng::rng(1);
        let model = TanhResponseModel::sample(30, 20, &mut r).unwrap();
        assert_eq!(model.phis.len(), 5);
        assert_eq!(model.nonnull_mask(30).iter().filter(|&&b| b).count(), 20);
        assert!(TanhResponseModel::sample(30, 18, &mut r).is_err());

        let x = Array2::from_shape_fn((50, 30), |(i, j)| ((i + 2 * j) % 9) as f64 - 4.0);
        let zeroed = TanhResponseModel {
            phis: vec![[0.0; 5]; 5],
            ..model.clone()
        };
        assert!(zeroed.signal(x.view()).iter().all(|&v| v == 0.0));

        // Only the tanh part: its magnitude is bounded by |φ4| per group.
        let tanh_only = TanhResponseModel {
            phis: model.phis.iter().map(|p| [0.0, p[1], 0.0, p[3], p[4]]).collect(),
            ..model.clone()
        };
        let bound: f64 = model.phis.iter().map(|p| p[3].abs()).sum();
        assert!(tanh_only.signal(x.view()).iter().all(|v| v.abs() <= bound));

        let (y, mask) = synthesize_tanh_response(x.view(), 20, 3).unwrap();
        assert_eq!(y.len(), 50);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 20);
    }

    #[test]
    fn standardize() {
        let x = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let z = standardize_columns(x.view()).unwrap();
        assert_eq!(z.column(0).to_vec(), vec![-1.0, 1.0]);

        let x = sample_gaussian_mixture(&GaussianMixtureSpec::default(), 300, 5, 2).unwrap();
        let z = standardize_columns(x.view()).unwrap();
        let (m, s) = column_moments(z.view());
        assert!(m.iter().all(|v| v.abs() < 1e-9));
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let zz = standardize_columns(z.view()).unwrap();
        assert!((&zz - &z).iter().all(|v| v.abs() < 1e-9));

        let mut c = x.clone();
        c.column_mut(3).fill(2.5);
        assert!(matches!(standardize_columns(c.view()), Err(Error::DegenerateColumn(3))));
    }

    #[test]
    fn split_sizes_and_partition() {
        for (n, tr) in [(2000, 1600), (200, 160), (7, 6)] {
            let s = Split::new(n, 0.8, 5).unwrap();
            assert_eq!(s.train.len(), tr);
            assert_eq!(s.val.len(), n - tr);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(Split::new(4, 0.8, 1).is_err());
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64);
        let (a, b) = split_train_val(x.view(), 0.8, 3).unwrap();
        let mut rows: Vec<Vec<f64>> = a.rows().into_iter().chain(b.rows()).map(|r| r.to_vec()).collect();
        rows.sort_by(|u, v| u[0].total_cmp(&v[0]));
        let orig: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        assert_eq!(rows, orig);
    }

    #[test]
    fn oracle_knockoff_properties() {
        let mut r = rng::rng(2);
        let n = 2000;
        let x = Array2::from_shape_fn((n, 4), |_| r.sample::<f64, _>(StandardNormal));
        let xk = oracle_knockoff_independent(x.view(), 3);
        for j in 0..4 {
            let mut a = x.column(j).to_vec();
            let mut b = xk.column(j).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
            let corr = x.column(j).dot(&xk.column(j)) / n as f64;
            assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "{corr}");
        }
    }
}
