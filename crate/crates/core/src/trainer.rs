//! Adversarial training of the generator against the swappers.
//!
//! Per minibatch the generator takes one AdamW descent step on
//! `L_SL + L_DRL`; every `γ`-th minibatch of an epoch each swapper also takes
//! one ascent step on the swap loss evaluated at the same forward pass. After
//! each epoch the total loss on the held-out split is computed with pinned
//! randomness and drives early stopping. The weights of the best validation
//! epoch are returned.
//!
//! Training is sequential at the step level. Randomness for epoch `e` comes
//! from streams derived from `(seed, e)`, so a run is bit-reproducible.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::datagen::Split;
use crate::error::{Error, Result};
use crate::losses::{build_objective, evaluate_objective, LossBreakdown, LossConfig, SwapNoise};
use crate::metrics::TransportOrder;
use crate::model::{uniform_noise, KnockoffNet, KnockoffNetConfig, Mode, SwapperState, DEFAULT_TEMPERATURE};
use crate::optim::{AdamW, AdamWConfig, ParamStore};
use crate::rng::{self, stream, Rng};

/// Smallest minibatch the dependency loss can handle.
const MIN_BATCH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_swapper: f64,
    pub lr_generator: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_rex: f64,
    pub lambda_decor: f64,
    pub lambda_dep: f64,
    pub early_stop_patience: usize,
    pub swapper_update_frequency: usize,
    pub num_swappers: usize,
    pub weight_decay: f64,
    pub temperature: f64,
    pub train_ratio: f64,
    pub num_projections: usize,
    pub order: TransportOrder,
    /// When true the swappers ascend the full swap loss including the REx and
    /// similarity terms; when false only the mean SWD.
    pub swapper_sees_regularizers: bool,
    /// Abort when any loss exceeds this magnitude.
    pub divergence_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_swapper: 1e-3,
            lr_generator: 1e-5,
            epochs: 200,
            batch_size: 64,
            lambda_rex: 30.0,
            lambda_decor: 1.0,
            lambda_dep: 20.0,
            early_stop_patience: 6,
            swapper_update_frequency: 3,
            num_swappers: 2,
            weight_decay: 0.01,
            temperature: DEFAULT_TEMPERATURE,
            train_ratio: 0.8,
            num_projections: crate::metrics::DEFAULT_PROJECTIONS,
            order: TransportOrder::W2,
            swapper_sees_regularizers: true,
            divergence_threshold: 1e6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Schedule sized for the desk network on one core: 20 epochs at a
    /// generator learning rate of 1e-4, other settings unchanged.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            lr_generator: 1e-4,
            ..Self::default()
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda_rex: self.lambda_rex,
            lambda_decor: self.lambda_decor,
            lambda_dep: self.lambda_dep,
            num_projections: self.num_projections,
            order: self.order,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_swapper", self.lr_swapper),
            ("lr_generator", self.lr_generator),
            ("temperature", self.temperature),
            ("divergence_threshold", self.divergence_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        if self.epochs == 0 || self.batch_size < MIN_BATCH || self.early_stop_patience == 0 {
            return Err(Error::invalid(format!(
                "epochs and patience must be positive and batch_size at least {MIN_BATCH}"
            )));
        }
        if self.swapper_update_frequency == 0 {
            return Err(Error::invalid("swapper_update_frequency must be at least 1"));
        }
        if self.num_swappers == 0 {
            return Err(Error::invalid("num_swappers must be at least 1"));
        }
        self.loss_config().validate()
    }

    /// The train/validation row split used by [`train`] for `n` rows.
    pub fn split(&self, n: usize) -> Result<Split> {
        Split::new(n, self.train_ratio, rng::derive(self.seed, &[stream::SPLIT]))
    }
}

/// Best-so-far early stopping with patience.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
        }
    }

    /// Records an epoch's loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub epoch: usize,
    /// 1-based minibatch index within the epoch.
    pub step: usize,
    pub swapper_updated: bool,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Field-wise mean over the epoch's minibatches.
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub improved: bool,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingLog {
    pub config: Option<TrainConfig>,
    pub net_config: Option<KnockoffNetConfig>,
    pub steps: Vec<StepRow>,
    pub epochs: Vec<EpochRow>,
    pub best_epoch: Option<usize>,
    /// Epoch after which early stopping fired, if it did.
    pub stopped_early_at: Option<usize>,
    pub swapper_updates: usize,
    pub wall_clock_secs: f64,
}

impl TrainingLog {
    /// The log with every timing field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut l = self.clone();
        l.wall_clock_secs = 0.0;
        for e in &mut l.epochs {
            e.wall_clock_secs = 0.0;
        }
        l
    }

    /// Epoch with the smallest validation dependency loss.
    pub fn min_drl_epoch(&self) -> Option<usize> {
        self.epochs
            .iter()
            .min_by(|a, b| a.val.drl.total_cmp(&b.val.drl))
            .map(|e| e.epoch)
    }

    /// Per-epoch rows as CSV text.
    pub fn epoch_table(&self) -> String {
        let mut out = String::from(
            "epoch,train_swd_mean,train_rex,train_decor,train_drl,train_total,val_swd_mean,val_rex,val_decor,val_drl,val_total,improved,wall_clock_secs\n",
        );
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.train.swd_mean(),
                e.train.rex,
                e.train.swapper_decor,
                e.train.drl,
                e.train.total,
                e.val.swd_mean(),
                e.val.rex,
                e.val.swapper_decor,
                e.val.drl,
                e.val.total,
                e.improved,
                e.wall_clock_secs
            ));
        }
        out
    }
}

/// Trained generator, final swappers and the log.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub net: KnockoffNet,
    pub swappers: Vec<SwapperState>,
    pub log: TrainingLog,
}

fn mean_breakdown(rows: &[LossBreakdown]) -> LossBreakdown {
    let n = rows.len() as f64;
    let mut out = rows[0].clone();
    let k = out.swd_per_swapper.len();
    out.swd_per_swapper = (0..k)
        .map(|i| rows.iter().map(|r| r.swd_per_swapper[i]).sum::<f64>() / n)
        .collect();
    out.rex = rows.iter().map(|r| r.rex).sum::<f64>() / n;
    out.swapper_decor = rows.iter().map(|r| r.swapper_decor).sum::<f64>() / n;
    out.drl = rows.iter().map(|r| r.drl).sum::<f64>() / n;
    out.total = rows.iter().map(|r| r.total).sum::<f64>() / n;
    out
}

/// Minibatch boundaries over a shuffled order. A trailing batch smaller than
/// the loss minimum is merged into the previous one.
fn batches(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        out.push((start, end));
        start = end;
    }
    if out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s < MIN_BATCH) {
        let (_, e) = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").1 = e;
    }
    out
}

/// Result of one differentiable evaluation.
pub struct StepGradients {
    pub breakdown: LossBreakdown,
    /// Gradient of `L_SL + L_DRL` for each generator slot.
    pub generator: Vec<Option<Array2<f64>>>,
    /// Gradient of the swapper objective for each swapper's logits.
    pub swappers: Vec<Array2<f64>>,
}

/// Runs the forward pass and both backward passes for one minibatch.
#[allow(clippy::too_many_arguments)]
pub fn step_gradients(
    net: &KnockoffNet,
    swappers: &[SwapperState],
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    noise: &SwapNoise,
    loss: &LossConfig,
    mode: Mode,
    dropout_rng: Option<&mut Rng>,
    swapper_sees_regularizers: bool,
    want_swapper_grads: bool,
) -> Result<StepGradients> {
    let mut g = Graph::new();
    let gen_vars = net.register(&mut g);
    let xv = g.constant(x.to_owned());
    let xk = net.forward_graph(&mut g, &gen_vars, x, z, mode, dropout_rng)?;
    let sw_vars: Vec<(Var, f64)> = swappers
        .iter()
        .enumerate()
        .map(|(i, s)| (g.param(i, s.logits.clone()), s.temperature))
        .collect();
    let obj = build_objective(&mut g, xv, xk, &sw_vars, noise, loss)?;
    let breakdown = obj.breakdown(&g, loss);

    let grads = g.backward_wrt(obj.total, &gen_vars);
    let generator = gen_vars.iter().map(|&v| grads.get(v).cloned()).collect();
    drop(grads);

    let swapper_grads = if want_swapper_grads {
        let target = if swapper_sees_regularizers {
            obj.swap_loss
        } else {
            obj.swd_mean
        };
        let leaves: Vec<Var> = sw_vars.iter().map(|&(v, _)| v).collect();
        let grads = g.backward_wrt(target, &leaves);
        sw_vars
            .iter()
            .zip(swappers)
            .map(|(&(v, _), s)| grads.get_or_zeros(v, &s.logits))
            .collect()
    } else {
        Vec::new()
    };
    Ok(StepGradients {
        breakdown,
        generator,
        swappers: swapper_grads,
    })
}

/// Validation loss with randomness pinned by `seed`.
pub fn validate(
    x_val: ArrayView2<'_, f64>,
    net: &KnockoffNet,
    swappers: &[SwapperState],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossBreakdown> {
    validate_with(x_val, net, swappers, cfg, seed, None)
}

/// As [`validate`]; `knockoff_override` replaces the generated knockoff
/// (a test hook).
pub fn validate_with(
    x_val: ArrayView2<'_, f64>,
    net: &KnockoffNet,
    swappers: &[SwapperState],
    cfg: &TrainConfig,
    seed: u64,
    knockoff_override: Option<ArrayView2<'_, f64>>,
) -> Result<LossBreakdown> {
    if x_val.nrows() == 0 {
        return Err(Error::invalid("validation split is empty"));
    }
    let mut r = rng::rng(seed);
    let z = uniform_noise(x_val.dim(), rng::derive(seed, &[stream::KNOCKOFF_Z]));
    let xk = match knockoff_override {
        Some(k) => k.to_owned(),
        None => net.forward(x_val, z.view())?,
    };
    let loss = cfg.loss_config();
    let noise = SwapNoise::draw(x_val.ncols(), swappers.len(), loss.num_projections, &mut r);
    evaluate_objective(x_val, xk.view(), swappers, &noise, &loss)
}

fn check_loss(b: &LossBreakdown, cfg: &TrainConfig) -> Option<String> {
    let values = b
        .swd_per_swapper
        .iter()
        .chain([&b.rex, &b.swapper_decor, &b.drl, &b.total]);
    for v in values {
        if !v.is_finite() {
            return Some(format!("non-finite loss {v}"));
        }
        if v.abs() > cfg.divergence_threshold {
            return Some(format!("loss {v:.3e} exceeds {:.1e}", cfg.divergence_threshold));
        }
    }
    None
}

/// Trains on `x` after splitting it by `cfg.train_ratio`.
pub fn train(x: ArrayView2<'_, f64>, cfg: &TrainConfig, net_cfg: KnockoffNetConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let split = cfg.split(x.nrows())?;
    let x_train = x.select(Axis(0), &split.train);
    let x_val = x.select(Axis(0), &split.val);
    train_split(x_train.view(), x_val.view(), cfg, net_cfg)
}

/// Trains on an explicit train/validation pair.
pub fn train_split(
    x_train: ArrayView2<'_, f64>,
    x_val: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
    net_cfg: KnockoffNetConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let p = x_train.ncols();
    if x_val.ncols() != p {
        return Err(Error::shape(p, x_val.ncols()));
    }
    if x_train.nrows() < MIN_BATCH {
        return Err(Error::invalid(format!("need at least {MIN_BATCH} training rows")));
    }
    if x_val.nrows() < MIN_BATCH {
        return Err(Error::invalid(format!("need at least {MIN_BATCH} validation rows")));
    }
    let started = Instant::now();
    let mut net = KnockoffNet::new(p, net_cfg, rng::derive(cfg.seed, &[stream::INIT, 0]))?;
    let mut init_rng = rng::rng_at(cfg.seed, &[stream::INIT, 1]);
    let mut swappers: Vec<SwapperState> = (0..cfg.num_swappers)
        .map(|_| SwapperState::random(p, cfg.temperature, &mut init_rng))
        .collect();

    let mut gen_opt = AdamW::new(AdamWConfig::new(cfg.lr_generator, cfg.weight_decay), &net.params);
    let mut swapper_stores: Vec<ParamStore> = swappers
        .iter()
        .map(|s| {
            let mut ps = ParamStore::new();
            ps.push("logits", s.logits.clone());
            ps
        })
        .collect();
    let mut sw_opts: Vec<AdamW> = swapper_stores
        .iter()
        .map(|ps| AdamW::new(AdamWConfig::new(cfg.lr_swapper, cfg.weight_decay), ps))
        .collect();

    let loss_cfg = cfg.loss_config();
    let mut log = TrainingLog {
        config: Some(*cfg),
        net_config: Some(net_cfg),
        ..Default::default()
    };
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best_params = net.params.clone();
    let mut order: Vec<usize> = (0..x_train.nrows()).collect();

    let diverged = |log: &TrainingLog, epoch: usize, reason: String| Error::TrainingDiverged {
        epoch,
        reason,
        log: Box::new(log.clone()),
    };

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut r = rng::rng_at(cfg.seed, &[stream::EPOCH, epoch as u64]);
        order.shuffle(&mut r);
        let mut rows = Vec::new();
        for (l, (s, e)) in batches(order.len(), cfg.batch_size).into_iter().enumerate() {
            let step = l + 1;
            let xb = x_train.select(Axis(0), &order[s..e]);
            let z = Array2::from_shape_fn(xb.dim(), |_| rand::Rng::random::<f64>(&mut r));
            let noise = SwapNoise::draw(p, swappers.len(), loss_cfg.num_projections, &mut r);
            let update_swappers = step % cfg.swapper_update_frequency == 0;
            let grads = step_gradients(
                &net,
                &swappers,
                xb.view(),
                z.view(),
                &noise,
                &loss_cfg,
                Mode::Train,
                Some(&mut r),
                cfg.swapper_sees_regularizers,
                update_swappers,
            )
            .map_err(|e| diverged(&log, epoch, e.to_string()))?;
            log.steps.push(StepRow {
                epoch,
                step,
                swapper_updated: update_swappers,
                loss: grads.breakdown.clone(),
            });
            if let Some(reason) = check_loss(&grads.breakdown, cfg) {
                return Err(diverged(&log, epoch, reason));
            }
            gen_opt.step(&mut net.params, &grads.generator);
            if update_swappers {
                for (i, g) in grads.swappers.into_iter().enumerate() {
                    // Ascent: descend on the negated gradient.
                    sw_opts[i].step(&mut swapper_stores[i], &[Some(-g)]);
                    swappers[i].logits.assign(swapper_stores[i].get(0));
                }
                log.swapper_updates += 1;
            }
            rows.push(grads.breakdown);
        }

        let val_seed = rng::derive(cfg.seed, &[stream::VALIDATION, epoch as u64]);
        let val = validate(x_val, &net, &swappers, cfg, val_seed).map_err(|e| diverged(&log, epoch, e.to_string()))?;
        let epoch_row = EpochRow {
            epoch,
            train: mean_breakdown(&rows),
            val: val.clone(),
            improved: false,
            wall_clock_secs: 0.0,
        };
        log.epochs.push(epoch_row);
        if let Some(reason) = check_loss(&val, cfg) {
            return Err(diverged(&log, epoch, format!("validation: {reason}")));
        }
        let (improved, stop) = stopper.observe(epoch, val.total);
        if improved {
            best_params = net.params.clone();
        }
        let last = log.epochs.last_mut().expect("just pushed");
        last.improved = improved;
        last.wall_clock_secs = epoch_start.elapsed().as_secs_f64();
        log::debug!(
            "epoch {epoch}: train {:.4} val {:.4} (swd {:.4}, drl {:.4}){}",
            last.train.total,
            val.total,
            val.swd_mean(),
            val.drl,
            if improved { " *" } else { "" }
        );
        if stop {
            log.stopped_early_at = Some(epoch);
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    net.params = best_params;
    Ok(TrainOutput { net, swappers, log })
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// `(flat index, analytic, numeric)` for each checked scalar.
    pub samples: Vec<(usize, f64, f64)>,
}

/// Relative error with an absolute floor that keeps near-zero gradients from
/// dominating through round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient of `loss` with central differences on
/// `num_params` scalars sampled without replacement.
///
/// `loss` returns the value and the gradient for every slot of the store.
pub fn finite_difference_gradient_check<F>(
    params: &ParamStore,
    loss: F,
    num_params: usize,
    step: f64,
    r: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, Vec<Option<Array2<f64>>>)>,
{
    let total = params.num_scalars();
    let k = num_params.min(total);
    let (_, grads) = loss(params)?;
    let mut flat_grad = Vec::with_capacity(total);
    for (slot, g) in grads.iter().enumerate() {
        match g {
            Some(g) => flat_grad.extend(g.iter().copied()),
            None => flat_grad.extend(std::iter::repeat_n(0.0, params.get(slot).len())),
        }
    }
    let picks = rand::seq::index::sample(r, total, k).into_vec();
    let mut work = params.clone();
    let mut samples = Vec::with_capacity(k);
    let mut max_err: f64 = 0.0;
    for idx in picks {
        let orig = work.flat_get(idx);
        work.flat_set(idx, orig + step);
        let (up, _) = loss(&work)?;
        work.flat_set(idx, orig - step);
        let (down, _) = loss(&work)?;
        work.flat_set(idx, orig);
        let numeric = (up - down) / (2.0 * step);
        let analytic = flat_grad[idx];
        max_err = max_err.max(relative_error(analytic, numeric));
        samples.push((idx, analytic, numeric));
    }
    Ok(GradCheckReport {
        max_relative_error: max_err,
        checked: k,
        samples,
    })
}

/// Gradient check of the full objective for `net`, with every random input
/// fixed and dropout off.
pub fn check_generator_gradients(
    net: &KnockoffNet,
    swappers: &[SwapperState],
    x: ArrayView2<'_, f64>,
    loss: &LossConfig,
    num_params: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut r = rng::rng(seed);
    let z = Array2::from_shape_fn(x.dim(), |_| rand::Rng::random::<f64>(&mut r));
    let noise = SwapNoise::draw(x.ncols(), swappers.len(), loss.num_projections, &mut r);
    let closure = |ps: &ParamStore| -> Result<(f64, Vec<Option<Array2<f64>>>)> {
        let probe = KnockoffNet {
            config: net.config,
            p: net.p,
            params: ps.clone(),
        };
        let g = step_gradients(&probe, swappers, x, z.view(), &noise, loss, Mode::Eval, None, true, false)?;
        Ok((g.breakdown.total, g.generator))
    };
    finite_difference_gradient_check(&net.params, closure, num_params, step, &mut r)
}
