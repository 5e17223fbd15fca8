//! End-to-end trials and repeated-seed experiments.
//!
//! A trial runs data generation, standardization, knockoff training and
//! generation, the optional perturbation, the filter and the swap diagnostics.
//! Every random stage draws from a stream derived from the repeat seed, which
//! is itself `derive(base_seed, [REPEAT, i])`. Adding repeats therefore never
//! changes earlier ones.

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{
    oracle_knockoff_independent, sample_archimedean_copula, sample_coefficients, sample_gaussian_mixture,
    standardize_columns, synthesize_linear_response, synthesize_tanh_response, CoefficientSpec, CopulaSpec,
    GaussianMixtureSpec, SyntheticDataset,
};
use crate::diagnostics::{pooled_statistic_summary, swap_property_suite, StatisticSummary, SwapReport};
use crate::drp::{apply_drp, DrpConfig};
use crate::error::{Error, Result, StageContext};
use crate::exec;
use crate::filter::{run_filter, RidgeConfig, SelectionResult};
use crate::io;
use crate::metrics::{sliced_wasserstein_correlation, EmpiricalSample, ProjectionConfig, TransportOrder, DEFAULT_PROJECTIONS};
use crate::model::KnockoffNetConfig;
use crate::rng::{self, stream};
use crate::trainer::{train, TrainConfig, TrainingLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Mixture(GaussianMixtureSpec),
    Copula(CopulaSpec),
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Externally supplied design (header line, comma separated). The
    /// response is synthesized unless `y` is given, in which case `nonnull`
    /// must name a file with one 0/1 flag per column.
    Files {
        x: PathBuf,
        y: Option<PathBuf>,
        nonnull: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ResponseSpec {
    Linear,
    Tanh { num_covariates: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnockoffSource {
    Trained,
    /// Independent column permutations; exact only for independent columns.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub disable_rex: bool,
    pub disable_swapper_decor: bool,
    pub k_override: Option<usize>,
    pub disable_drp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetSpec,
    pub n: usize,
    pub p: usize,
    pub coefficients: CoefficientSpec,
    pub response: ResponseSpec,
    pub standardize: bool,
    pub train: TrainConfig,
    pub net_preset: String,
    pub drp: DrpConfig,
    pub q: f64,
    pub num_repeats: usize,
    pub base_seed: u64,
    pub ablation: AblationFlags,
    pub knockoff: KnockoffSource,
    /// Concurrent trials; `0` uses every available core.
    pub workers: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentSpec {
    /// Mixture benchmark sized for one workstation: n=600, p=30, six nonnulls.
    pub fn desk() -> Self {
        Self {
            name: "mixture-desk".into(),
            dataset: DatasetSpec::Mixture(GaussianMixtureSpec::default()),
            n: 600,
            p: 30,
            coefficients: CoefficientSpec {
                scale_divisor: 15.0,
                num_nonnull: 6,
            },
            response: ResponseSpec::Linear,
            standardize: true,
            train: TrainConfig::desk(),
            net_preset: "desk".into(),
            drp: DrpConfig::default(),
            q: 0.1,
            num_repeats: 50,
            base_seed: 0,
            ablation: AblationFlags::default(),
            knockoff: KnockoffSource::Trained,
            workers: 0,
        }
    }

    /// n=2000, p=100, twenty nonnulls, the large network and the full
    /// 200-epoch schedule, 600 repeats.
    pub fn large() -> Self {
        Self {
            name: "mixture-large".into(),
            n: 2000,
            p: 100,
            coefficients: CoefficientSpec::default(),
            train: TrainConfig::default(),
            net_preset: "large".into(),
            num_repeats: 600,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_repeats == 0 {
            return Err(Error::invalid("num_repeats must be at least 1"));
        }
        if self.ablation.k_override == Some(0) {
            return Err(Error::invalid("k_override must be at least 1"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !matches!(self.dataset, DatasetSpec::Files { .. }) && (self.n < 5 || self.p < 2) {
            return Err(Error::invalid(format!("need n >= 5 and p >= 2, got n={} p={}", self.n, self.p)));
        }
        if let DatasetSpec::Files { y: Some(_), nonnull: None, .. } = &self.dataset {
            return Err(Error::invalid("an external response needs a nonnull mask file"));
        }
        KnockoffNetConfig::preset(&self.net_preset)?.validate()?;
        self.drp.validate()?;
        self.effective_train_config(0).validate()
    }

    /// Training configuration after the ablation flags are applied.
    pub fn effective_train_config(&self, seed: u64) -> TrainConfig {
        let mut cfg = self.train;
        if self.ablation.disable_rex {
            cfg.lambda_rex = 0.0;
        }
        if self.ablation.disable_swapper_decor {
            cfg.lambda_decor = 0.0;
        }
        if let Some(k) = self.ablation.k_override {
            cfg.num_swappers = k;
        }
        cfg.seed = seed;
        cfg
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec is always serializable");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        rng::derive(self.base_seed, &[stream::REPEAT, repeat as u64])
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// The standardized design, its raw form and the knockoff for one repeat.
/// Nothing here depends on the response, the perturbation or `q`.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub repeat: usize,
    pub seed: u64,
    pub x_raw: Array2<f64>,
    pub x: Array2<f64>,
    pub knockoff: Array2<f64>,
    pub log: Option<TrainingLog>,
    pub prepare_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub repeat: usize,
    pub seed: u64,
    pub runtime_secs: f64,
    /// Dependence between the design and the knockoff before and after the
    /// perturbation, on a shared direction draw.
    pub swc_before: f64,
    pub swc_after: Option<f64>,
    pub nonnull_mask: Vec<bool>,
    pub selection: SelectionResult,
    pub swap: SwapReport,
    pub log: Option<TrainingLog>,
}

/// Flat per-repeat row written to delimited text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub repeat: usize,
    pub seed: u64,
    pub fdp: f64,
    pub power: f64,
    pub tau: f64,
    pub num_selected: usize,
    pub runtime_secs: f64,
    pub swc_before: f64,
    pub swc_after: Option<f64>,
    pub swap_mmd_linear: f64,
    pub swap_swd1: f64,
    pub swap_swd2: f64,
}

impl TrialRecord {
    pub fn row(&self) -> TrialRow {
        TrialRow {
            repeat: self.repeat,
            seed: self.seed,
            fdp: self.selection.fdp,
            power: self.selection.power,
            tau: self.selection.tau,
            num_selected: self.selection.selected.len(),
            runtime_secs: self.runtime_secs,
            swc_before: self.swc_before,
            swc_after: self.swc_after,
            swap_mmd_linear: self.swap.mean_mmd_linear,
            swap_swd1: self.swap.mean_swd1,
            swap_swd2: self.swap.mean_swd2,
        }
    }
}

fn load_design(spec: &ExperimentSpec, seed: u64) -> Result<Array2<f64>> {
    let data_seed = rng::derive(seed, &[stream::DATA]);
    match &spec.dataset {
        DatasetSpec::Mixture(m) => sample_gaussian_mixture(m, spec.n, spec.p, data_seed),
        DatasetSpec::Copula(c) => sample_archimedean_copula(c, spec.n, spec.p, data_seed),
        DatasetSpec::Gaussian => {
            use rand::Rng as _;
            let mut r = rng::rng(data_seed);
            Ok(Array2::from_shape_fn((spec.n, spec.p), |_| r.sample(rand_distr::StandardNormal)))
        }
        DatasetSpec::Files { x, .. } => Ok(io::read_matrix(x)?.0),
    }
}

/// Data, standardization and knockoff for repeat `repeat`.
pub fn prepare_trial(spec: &ExperimentSpec, repeat: usize) -> Result<PreparedTrial> {
    let start = Instant::now();
    let seed = spec.repeat_seed(repeat);
    let x_raw = load_design(spec, seed).stage("data")?;
    let x = if spec.standardize {
        standardize_columns(x_raw.view()).stage("standardize")?
    } else {
        x_raw.clone()
    };
    let (knockoff, log) = match spec.knockoff {
        KnockoffSource::Oracle => (oracle_knockoff_independent(x.view(), rng::derive(seed, &[stream::ORACLE])), None),
        KnockoffSource::Trained => {
            let cfg = spec.effective_train_config(rng::derive(seed, &[stream::INIT]));
            let net_cfg = KnockoffNetConfig::preset(&spec.net_preset).stage("train")?;
            let out = train(x.view(), &cfg, net_cfg).stage("train")?;
            let xk = out
                .net
                .generate(x.view(), rng::derive(seed, &[stream::KNOCKOFF_Z]))
                .stage("generate")?;
            (xk, Some(out.log))
        }
    };
    Ok(PreparedTrial {
        repeat,
        seed,
        x_raw,
        x,
        knockoff,
        log,
        prepare_secs: start.elapsed().as_secs_f64(),
    })
}

/// Response, true coefficients (linear responses only) and nonnull mask.
fn response(
    spec: &ExperimentSpec,
    x_raw: &Array2<f64>,
    x: &Array2<f64>,
    seed: u64,
) -> Result<(Array1<f64>, Option<Array1<f64>>, Vec<bool>)> {
    if let DatasetSpec::Files { y: Some(y), nonnull: Some(mask), .. } = &spec.dataset {
        let y = io::read_vector(y)?;
        let mask: Vec<bool> = io::read_vector(mask)?.iter().map(|&v| v != 0.0).collect();
        if y.len() != x.nrows() || mask.len() != x.ncols() {
            return Err(Error::shape(x.dim(), (y.len(), mask.len())));
        }
        return Ok((y, None, mask));
    }
    match spec.response {
        ResponseSpec::Linear => {
            let (beta, mask) = sample_coefficients(
                &spec.coefficients,
                x.nrows(),
                x.ncols(),
                rng::derive(seed, &[stream::COEFFICIENTS]),
            )?;
            // The signal is defined on the design as generated; only the
            // knockoff and selection stages see standardized columns.
            let y = synthesize_linear_response(x_raw.view(), &beta, rng::derive(seed, &[stream::RESPONSE]))?;
            Ok((y, Some(beta), mask))
        }
        ResponseSpec::Tanh { num_covariates } => {
            let (y, mask) = synthesize_tanh_response(x.view(), num_covariates, rng::derive(seed, &[stream::RESPONSE]))?;
            Ok((y, None, mask))
        }
    }
}

/// The dataset repeat `repeat` would see: raw design, response and truth.
/// The returned `x` is standardized when the spec asks for it. For responses
/// without a coefficient vector, `beta_star` holds the 0/1 nonnull indicator.
pub fn synthesize_dataset(spec: &ExperimentSpec, repeat: usize) -> Result<(SyntheticDataset, Array2<f64>)> {
    spec.validate()?;
    let seed = spec.repeat_seed(repeat);
    let x_raw = load_design(spec, seed).stage("data")?;
    let x = if spec.standardize {
        standardize_columns(x_raw.view()).stage("standardize")?
    } else {
        x_raw.clone()
    };
    let (y, beta, mask) = response(spec, &x_raw, &x, seed).stage("response")?;
    let beta_star = beta.unwrap_or_else(|| Array1::from_iter(mask.iter().map(|&m| if m { 1.0 } else { 0.0 })));
    Ok((
        SyntheticDataset {
            x,
            y,
            beta_star,
            nonnull_mask: mask,
            seed,
        },
        x_raw,
    ))
}

fn swc(x: &Array2<f64>, xk: &Array2<f64>, seed: u64) -> Result<f64> {
    let cfg = ProjectionConfig::seeded(DEFAULT_PROJECTIONS, TransportOrder::W2, rng::derive(seed, &[stream::DIAGNOSTICS, stream::PROJECTIONS]));
    sliced_wasserstein_correlation(&EmpiricalSample::new(x.clone())?, &EmpiricalSample::new(xk.clone())?, &cfg)
}

/// Response, perturbation, filter and diagnostics on a prepared trial.
pub fn finish_trial(spec: &ExperimentSpec, prepared: &PreparedTrial) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = prepared.seed;
    let (y, _, mask) = response(spec, &prepared.x_raw, &prepared.x, seed).stage("response")?;
    let swc_before = swc(&prepared.x, &prepared.knockoff, seed).stage("dependence")?;
    let (knockoff, drp_meta) = if spec.ablation.disable_drp {
        (prepared.knockoff.clone(), None)
    } else {
        let cfg = DrpConfig {
            seed: rng::derive(seed, &[stream::DRP]),
            ..spec.drp
        };
        let out = apply_drp(prepared.knockoff.view(), prepared.x.view(), &cfg).stage("perturb")?;
        (out.knockoff, Some((out.alpha, out.seed, out.permutation_digest)))
    };
    let swc_after = match drp_meta {
        Some(_) => Some(swc(&prepared.x, &knockoff, seed).stage("dependence")?),
        None => None,
    };
    let ridge = RidgeConfig {
        seed: rng::derive(seed, &[stream::FILTER]),
        ..RidgeConfig::default()
    };
    let mut selection = run_filter(prepared.x.view(), knockoff.view(), y.view(), &mask, spec.q, &ridge).stage("filter")?;
    if let Some((alpha, drp_seed, digest)) = drp_meta {
        selection.meta.drp_alpha = Some(alpha);
        selection.meta.drp_seed = Some(drp_seed);
        selection.meta.permutation_digest = Some(digest);
    }
    selection.meta.config_digest = Some(spec.digest());
    let swap = swap_property_suite(prepared.x.view(), knockoff.view(), rng::derive(seed, &[stream::DIAGNOSTICS]))
        .stage("diagnostics")?;
    let runtime_secs = prepared.prepare_secs + start.elapsed().as_secs_f64();
    log::info!(
        "{} repeat {}: fdp={:.3} power={:.3} selected={} ({:.1}s)",
        spec.name,
        prepared.repeat,
        selection.fdp,
        selection.power,
        selection.selected.len(),
        runtime_secs
    );
    Ok(TrialRecord {
        repeat: prepared.repeat,
        seed,
        runtime_secs,
        swc_before,
        swc_after,
        nonnull_mask: mask,
        selection,
        swap,
        log: prepared.log.clone(),
    })
}

pub fn run_trial(spec: &ExperimentSpec, repeat: usize) -> Result<TrialRecord> {
    spec.validate()?;
    finish_trial(spec, &prepare_trial(spec, repeat)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    pub single_repeat: bool,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: n,
            mean,
            std,
            median: quantile(&sorted, 0.5),
            q05: quantile(&sorted, 0.05),
            q95: quantile(&sorted, 0.95),
            single_repeat: n == 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub repeat: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub fdp: Summary,
    pub power: Summary,
    pub runtime_secs: Summary,
    pub swap_mmd_linear: f64,
    pub swap_swd1: f64,
    pub swap_swd2: f64,
    pub swc_before: f64,
    pub swc_after: Option<f64>,
    /// Share of repeats whose dependence dropped under the perturbation.
    pub swc_reduced_fraction: Option<f64>,
}

impl Aggregates {
    /// Recomputes every aggregate from per-repeat rows.
    pub fn from_rows(rows: &[TrialRow]) -> Option<Self> {
        let col = |f: fn(&TrialRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
        let after: Vec<f64> = rows.iter().filter_map(|r| r.swc_after).collect();
        let reduced = rows
            .iter()
            .filter(|r| r.swc_after.is_some_and(|a| a < r.swc_before))
            .count();
        Some(Self {
            fdp: Summary::of(&col(|r| r.fdp))?,
            power: Summary::of(&col(|r| r.power))?,
            runtime_secs: Summary::of(&col(|r| r.runtime_secs))?,
            swap_mmd_linear: mean(col(|r| r.swap_mmd_linear)),
            swap_swd1: mean(col(|r| r.swap_swd1)),
            swap_swd2: mean(col(|r| r.swap_swd2)),
            swc_before: mean(col(|r| r.swc_before)),
            swc_after: (after.len() == rows.len()).then(|| mean(after)),
            swc_reduced_fraction: rows
                .iter()
                .all(|r| r.swc_after.is_some())
                .then(|| reduced as f64 / rows.len() as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_digest: String,
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    /// `None` when every repeat failed.
    pub aggregates: Option<Aggregates>,
    pub statistics: Option<StatisticSummary>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<TrialRow> {
        self.trials.iter().map(TrialRecord::row).collect()
    }

    fn assemble(spec: &ExperimentSpec, outcomes: Vec<Result<TrialRecord>>) -> Self {
        let mut trials = Vec::new();
        let mut failures = Vec::new();
        for (repeat, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(t) => trials.push(t),
                Err(e) => {
                    log::warn!("{} repeat {repeat} failed: {e}", spec.name);
                    failures.push(TrialFailure {
                        repeat,
                        error: e.to_string(),
                    });
                }
            }
        }
        let rows: Vec<TrialRow> = trials.iter().map(TrialRecord::row).collect();
        let pairs: Vec<(&[f64], &[bool])> = trials
            .iter()
            .map(|t| (t.selection.w.as_slice(), t.nonnull_mask.as_slice()))
            .collect();
        Self {
            name: spec.name.clone(),
            config_digest: spec.digest(),
            spec: spec.clone(),
            aggregates: Aggregates::from_rows(&rows),
            statistics: pooled_statistic_summary(&pairs).ok(),
            trials,
            failures,
        }
    }
}

/// All repeats of `spec`, concurrently up to `spec.workers`. Failed repeats
/// are recorded and the rest still run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let outcomes = exec::with_workers(spec.workers, || exec::map_indexed(spec.num_repeats, |i| run_trial(spec, i)));
    Ok(ExperimentReport::assemble(spec, outcomes))
}

/// Runs several specs that share data and knockoffs with `base` (they may
/// differ only in response, coefficients, perturbation, `q` or name). Each
/// repeat is trained once.
pub fn run_sharing_knockoffs(base: &ExperimentSpec, variants: &[ExperimentSpec]) -> Result<Vec<ExperimentReport>> {
    base.validate()?;
    for v in variants {
        v.validate()?;
        let same = ExperimentSpec {
            name: base.name.clone(),
            coefficients: base.coefficients,
            response: base.response,
            drp: base.drp,
            q: base.q,
            ablation: AblationFlags {
                disable_drp: base.ablation.disable_drp,
                ..v.ablation
            },
            ..v.clone()
        };
        if same != *base {
            return Err(Error::invalid(format!(
                "variant `{}` changes a setting that affects the knockoff",
                v.name
            )));
        }
    }
    let per_repeat: Vec<Vec<Result<TrialRecord>>> = exec::with_workers(base.workers, || {
        exec::map_indexed(base.num_repeats, |i| match prepare_trial(base, i) {
            Ok(prep) => variants.iter().map(|v| finish_trial(v, &prep)).collect(),
            Err(e) => {
                let msg = e.to_string();
                variants.iter().map(|_| Err(Error::Parse(msg.clone()))).collect()
            }
        })
    });
    let mut columns: Vec<Vec<Result<TrialRecord>>> = variants.iter().map(|_| Vec::new()).collect();
    for row in per_repeat {
        for (k, r) in row.into_iter().enumerate() {
            columns[k].push(r);
        }
    }
    Ok(variants
        .iter()
        .zip(columns)
        .map(|(v, outcomes)| ExperimentReport::assemble(v, outcomes))
        .collect())
}

pub const ABLATION_VARIANTS: [&str; 5] = ["full", "no_rex", "k1", "no_swapper_decor", "no_drp"];

/// The base spec with one component removed, by variant name.
pub fn ablation_variant(base: &ExperimentSpec, variant: &str) -> Result<ExperimentSpec> {
    let mut s = base.clone();
    s.ablation = AblationFlags::default();
    match variant {
        "full" => {}
        "no_rex" => s.ablation.disable_rex = true,
        "k1" => s.ablation.k_override = Some(1),
        "no_swapper_decor" => s.ablation.disable_swapper_decor = true,
        "no_drp" => s.ablation.disable_drp = true,
        other => return Err(Error::invalid(format!("unknown ablation variant `{other}`"))),
    }
    s.name = format!("{}/{variant}", base.name);
    Ok(s)
}

/// One report per ablation variant, all on the base seed ladder. `full` and
/// `no_drp` share their trained knockoffs.
pub fn run_ablation(base: &ExperimentSpec) -> Result<Vec<(String, ExperimentReport)>> {
    let variants: Vec<ExperimentSpec> = ABLATION_VARIANTS
        .iter()
        .map(|v| ablation_variant(base, v))
        .collect::<Result<_>>()?;
    let shared = run_sharing_knockoffs(&variants[0], &[variants[0].clone(), variants[4].clone()])?;
    let mut shared = shared.into_iter();
    let full = shared.next().expect("two reports");
    let no_drp = shared.next().expect("two reports");
    let mut out = vec![(ABLATION_VARIANTS[0].to_string(), full)];
    for (name, spec) in ABLATION_VARIANTS[1..4].iter().zip(&variants[1..4]) {
        out.push((name.to_string(), run_experiment(spec)?));
    }
    out.push((ABLATION_VARIANTS[4].to_string(), no_drp));
    Ok(out)
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub const BETA_SCALE_GRID: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
pub const RHO_GRID: [f64; 3] = [0.6, 0.7, 0.8];

/// One point of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: f64,
    pub report: ExperimentReport,
}

/// Perturbation weight sweep. Knockoffs are trained once per repeat.
pub fn sweep_alpha(base: &ExperimentSpec, alphas: &[f64]) -> Result<Vec<SweepPoint>> {
    let variants: Vec<ExperimentSpec> = alphas
        .iter()
        .map(|&a| {
            let mut s = base.clone();
            s.drp.alpha = a;
            s.drp.schedule_c = None;
            s.ablation.disable_drp = false;
            s.name = format!("{}/alpha={a}", base.name);
            s
        })
        .collect();
    let reports = run_sharing_knockoffs(base, &variants)?;
    Ok(alphas
        .iter()
        .zip(reports)
        .map(|(&value, report)| SweepPoint {
            parameter: "alpha".into(),
            value,
            report,
        })
        .collect())
}

/// Coefficient amplitude sweep over `p / (c·√n)`. Knockoffs are shared since
/// the design does not depend on the coefficients.
pub fn sweep_beta_scale(base: &ExperimentSpec, scales: &[f64]) -> Result<Vec<SweepPoint>> {
    let variants: Vec<ExperimentSpec> = scales
        .iter()
        .map(|&c| {
            let mut s = base.clone();
            s.coefficients.scale_divisor = c;
            s.name = format!("{}/scale={c}", base.name);
            s
        })
        .collect();
    let reports = run_sharing_knockoffs(base, &variants)?;
    Ok(scales
        .iter()
        .zip(reports)
        .map(|(&value, report)| SweepPoint {
            parameter: "beta_scale".into(),
            value,
            report,
        })
        .collect())
}

/// Mixture correlation sweep; each value retrains.
pub fn sweep_rho(base: &ExperimentSpec, rhos: &[f64]) -> Result<Vec<SweepPoint>> {
    let DatasetSpec::Mixture(mix) = base.dataset else {
        return Err(Error::invalid("the correlation sweep needs a mixture dataset"));
    };
    rhos.iter()
        .map(|&rho| {
            let mut s = base.clone();
            s.dataset = DatasetSpec::Mixture(GaussianMixtureSpec { rho_base: rho, ..mix });
            s.name = format!("{}/rho={rho}", base.name);
            Ok(SweepPoint {
                parameter: "rho_base".into(),
                value: rho,
                report: run_experiment(&s)?,
            })
        })
        .collect()
}
