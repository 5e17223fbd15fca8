//! Training objective for the generator and the swappers.
//!
//! The swap loss compares the joint sample `(X, X̃)` with its image under each
//! swapper's relaxed swap, averaged over swappers, plus a variance penalty
//! across swappers (REx) and a penalty on swapper similarity. The dependency
//! loss is `λ₃ · SWC(X, X̃)`.
//!
//! Every stochastic input of one evaluation (projection directions and Gumbel
//! draws) lives in a [`SwapNoise`], so a loss value is a pure function of its
//! arguments and can be replayed exactly.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::metrics::{self, random_directions, EmpiricalSample, ProjectionConfig, TransportOrder};
use crate::model::{gumbel_noise, SwapperState};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the REx variance penalty.
    pub lambda_rex: f64,
    /// Weight of the swapper-similarity penalty.
    pub lambda_decor: f64,
    /// Weight of the dependency loss.
    pub lambda_dep: f64,
    pub num_projections: usize,
    pub order: TransportOrder,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_rex: 30.0,
            lambda_decor: 1.0,
            lambda_dep: 20.0,
            num_projections: metrics::DEFAULT_PROJECTIONS,
            order: TransportOrder::W2,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rex", self.lambda_rex),
            ("lambda_decor", self.lambda_decor),
            ("lambda_dep", self.lambda_dep),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.num_projections == 0 {
            return Err(Error::invalid("num_projections must be at least 1"));
        }
        Ok(())
    }
}

/// All per-terms values of one objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LossBreakdown {
    pub swd_per_swapper: Vec<f64>,
    pub rex: f64,
    pub swapper_decor: f64,
    /// Already multiplied by `lambda3`.
    pub drl: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl LossBreakdown {
    pub fn swd_mean(&self) -> f64 {
        if self.swd_per_swapper.is_empty() {
            0.0
        } else {
            self.swd_per_swapper.iter().sum::<f64>() / self.swd_per_swapper.len() as f64
        }
    }

    /// `mean SWD + λ₁·REx + λ₂·decor`.
    pub fn swap_loss(&self) -> f64 {
        self.swd_mean() + self.lambda1 * self.rex + self.lambda2 * self.swapper_decor
    }

    /// Recomposes the total from its parts.
    pub fn recomposed_total(&self) -> f64 {
        self.swap_loss() + self.drl
    }

    pub fn is_finite(&self) -> bool {
        self.swd_per_swapper.iter().all(|v| v.is_finite())
            && [self.rex, self.swapper_decor, self.drl, self.total].iter().all(|v| v.is_finite())
    }
}

/// Random inputs of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapNoise {
    /// 2p×L directions for the swap SWDs.
    pub swd_dirs: Array2<f64>,
    /// 2p×L directions shared by the three SWC distances.
    pub swc_dirs: Array2<f64>,
    /// One 2×p Gumbel draw per swapper.
    pub gumbel: Vec<Array2<f64>>,
}

impl SwapNoise {
    pub fn draw(p: usize, num_swappers: usize, num_projections: usize, r: &mut Rng) -> Self {
        let swd_dirs = random_directions(2 * p, num_projections, r);
        let gumbel = (0..num_swappers).map(|_| gumbel_noise(p, r)).collect();
        let swc_dirs = random_directions(2 * p, num_projections, r);
        Self {
            swd_dirs,
            swc_dirs,
            gumbel,
        }
    }

    /// Gumbel draws that force every relaxed indicator to exactly zero.
    pub fn force_no_swap(&mut self) {
        for g in &mut self.gumbel {
            g.row_mut(0).fill(1e6);
            g.row_mut(1).fill(0.0);
        }
    }
}

/// Graph handles of the objective's terms.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub swd: Vec<Var>,
    pub swd_mean: Var,
    pub rex: Var,
    pub decor: Var,
    /// `mean SWD + λ₁·REx + λ₂·decor`.
    pub swap_loss: Var,
    /// `λ₃·SWC`.
    pub drl: Var,
    pub total: Var,
}

impl ObjectiveVars {
    pub fn breakdown(&self, g: &Graph, cfg: &LossConfig) -> LossBreakdown {
        LossBreakdown {
            swd_per_swapper: self.swd.iter().map(|&v| g.scalar(v)).collect(),
            rex: g.scalar(self.rex),
            swapper_decor: g.scalar(self.decor),
            drl: g.scalar(self.drl),
            total: g.scalar(self.total),
            lambda1: cfg.lambda_rex,
            lambda2: cfg.lambda_decor,
            lambda3: cfg.lambda_dep,
        }
    }
}

fn check_decor_weights(values: &[&Array2<f64>]) -> Result<()> {
    if values.len() < 2 {
        return Ok(());
    }
    for (i, v) in values.iter().enumerate() {
        if !(v.iter().map(|x| x * x).sum::<f64>() > 0.0) {
            return Err(Error::DegenerateWeights(format!("swapper {i} has zero-norm logits")));
        }
    }
    Ok(())
}

/// Graph version of the empirical SWC on the first even number of rows.
fn swc_graph(g: &mut Graph, x: Var, xk: Var, dirs: &Array2<f64>, order: TransportOrder) -> Result<Var> {
    let n = g.value(x).nrows() / 2;
    if n < 2 {
        return Err(Error::invalid("SWC needs at least 4 rows"));
    }
    let x1 = g.slice_rows(x, 0, n);
    let x2 = g.slice_rows(x, n, 2 * n);
    let y1 = g.slice_rows(xk, 0, n);
    let y2 = g.slice_rows(xk, n, 2 * n);
    let ixy = g.concat_cols(&[x1, y1]);
    let ixy_t = g.concat_cols(&[x2, y1]);
    let ixx = g.concat_cols(&[x1, x1]);
    let ixx_t = g.concat_cols(&[x2, x1]);
    let iyy = g.concat_cols(&[y1, y1]);
    let iyy_t = g.concat_cols(&[y2, y1]);
    let cross = g.swd(ixy, ixy_t, dirs.clone(), order);
    let sx = g.swd(ixx, ixx_t, dirs.clone(), order);
    let sy = g.swd(iyy, iyy_t, dirs.clone(), order);
    let den = g.mul(sx, sy);
    if !(g.scalar(den) > 0.0) {
        return Err(Error::DegenerateSample(
            "SWC denominator is zero (a half-sample is degenerate)".into(),
        ));
    }
    let den = g.sqrt(den);
    let raw = g.div(cross, den);
    let v = g.scalar(raw);
    // Small minibatches push the raw ratio past 1 routinely; only the
    // full-sample metric warns.
    if !(-0.05..=1.05).contains(&v) {
        log::debug!("minibatch SWC pre-clamp value {v:.4} is outside [-0.05, 1.05]");
    }
    Ok(g.clamp(raw, 0.0, 1.0))
}

/// Appends the full objective to `g`.
///
/// `x` and `xk` are n×p nodes, `swappers` are 2×p logit nodes with their
/// temperatures. Both the swap SWDs and the SWC are differentiable in `xk`
/// and the swap SWDs in the swapper logits.
pub fn build_objective(
    g: &mut Graph,
    x: Var,
    xk: Var,
    swappers: &[(Var, f64)],
    noise: &SwapNoise,
    cfg: &LossConfig,
) -> Result<ObjectiveVars> {
    cfg.validate()?;
    let k = swappers.len();
    if k == 0 {
        return Err(Error::invalid("at least one swapper is required"));
    }
    if noise.gumbel.len() != k {
        return Err(Error::shape(k, noise.gumbel.len()));
    }
    let (n, p) = g.value(x).dim();
    if g.value(xk).dim() != (n, p) {
        return Err(Error::shape((n, p), g.value(xk).dim()));
    }
    if noise.swd_dirs.nrows() != 2 * p || noise.swc_dirs.nrows() != 2 * p {
        return Err(Error::shape(2 * p, noise.swd_dirs.nrows()));
    }
    check_decor_weights(&swappers.iter().map(|&(v, _)| g.value(v)).collect::<Vec<_>>())?;

    let joint = g.concat_cols(&[x, xk]);
    let diff = g.sub(xk, x);
    let mut swd = Vec::with_capacity(k);
    for (&(logits, temp), gumbel) in swappers.iter().zip(&noise.gumbel) {
        let b = g.gumbel_sigmoid(logits, gumbel, temp);
        let db = g.mul_row(diff, b);
        let xs = g.add(x, db);
        let xks = g.sub(xk, db);
        let swapped = g.concat_cols(&[xs, xks]);
        swd.push(g.swd(joint, swapped, noise.swd_dirs.clone(), cfg.order));
    }
    let swd_mean = g.mean(&swd);

    let devs: Vec<Var> = swd
        .iter()
        .map(|&s| {
            let d = g.sub(s, swd_mean);
            g.square(d)
        })
        .collect();
    let rex = g.mean(&devs);

    let decor = if k >= 2 {
        let mut sims = Vec::with_capacity(k * (k - 1));
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    sims.push(g.cosine(swappers[i].0, swappers[j].0));
                }
            }
        }
        g.mean(&sims)
    } else {
        g.scalar_constant(0.0)
    };

    let rex_term = g.scale(rex, cfg.lambda_rex);
    let decor_term = g.scale(decor, cfg.lambda_decor);
    let swap_loss = g.sum(&[swd_mean, rex_term, decor_term]);

    let even = n - n % 2;
    let (xe, xke) = if even == n {
        (x, xk)
    } else {
        (g.slice_rows(x, 0, even), g.slice_rows(xk, 0, even))
    };
    let swc = swc_graph(g, xe, xke, &noise.swc_dirs, cfg.order)?;
    let drl = g.scale(swc, cfg.lambda_dep);
    let total = g.add(swap_loss, drl);
    Ok(ObjectiveVars {
        swd,
        swd_mean,
        rex,
        decor,
        swap_loss,
        drl,
        total,
    })
}

/// Evaluates the objective on fixed matrices with explicit noise.
pub fn evaluate_objective(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    swappers: &[SwapperState],
    noise: &SwapNoise,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if x.dim() != xk.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.to_owned());
    let xkv = g.constant(xk.to_owned());
    let sw: Vec<(Var, f64)> = swappers
        .iter()
        .map(|s| (g.constant(s.logits.clone()), s.temperature))
        .collect();
    let vars = build_objective(&mut g, xv, xkv, &sw, noise, cfg)?;
    Ok(vars.breakdown(&g, cfg))
}

/// `L_SL`: the swap loss with its regularizers. The breakdown's `drl` is zero
/// and its `total` equals the returned scalar.
pub fn swap_loss(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    swappers: &[SwapperState],
    cfg: &LossConfig,
    r: &mut Rng,
) -> Result<(f64, LossBreakdown)> {
    let noise = SwapNoise::draw(x.ncols(), swappers.len(), cfg.num_projections, r);
    let mut b = evaluate_objective(x, xk, swappers, &noise, cfg)?;
    b.drl = 0.0;
    b.total = b.swap_loss();
    Ok((b.total, b))
}

/// Population variance.
pub fn rex_penalty(swd_values: &[f64]) -> f64 {
    if swd_values.is_empty() {
        return 0.0;
    }
    let k = swd_values.len() as f64;
    let m = swd_values.iter().sum::<f64>() / k;
    swd_values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k
}

/// Mean cosine similarity of the flattened logits over ordered pairs.
pub fn swapper_decorrelation_loss(swappers: &[SwapperState]) -> Result<f64> {
    let k = swappers.len();
    if k < 2 {
        return Ok(0.0);
    }
    check_decor_weights(&swappers.iter().map(|s| &s.logits).collect::<Vec<_>>())?;
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let (a, b) = (&swappers[i].logits, &swappers[j].logits);
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                total += dot / (na * nb);
            }
        }
    }
    Ok(total / (k * (k - 1)) as f64)
}

/// `λ₃ · SWC(X, X̃)`.
pub fn dependency_loss(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    lambda3: f64,
    cfg: &ProjectionConfig,
) -> Result<f64> {
    let xs = EmpiricalSample::new(x.to_owned())?;
    let ys = EmpiricalSample::new(xk.to_owned())?;
    Ok(lambda3 * metrics::sliced_wasserstein_correlation(&xs, &ys, cfg)?)
}

/// `L_SL + L_DRL` with fresh noise from `r`.
pub fn total_objective(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    swappers: &[SwapperState],
    cfg: &LossConfig,
    r: &mut Rng,
) -> Result<(f64, LossBreakdown)> {
    let noise = SwapNoise::draw(x.ncols(), swappers.len(), cfg.num_projections, r);
    let b = evaluate_objective(x, xk, swappers, &noise, cfg)?;
    Ok((b.total, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::oracle_knockoff_independent;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn randn(shape: (usize, usize), seed: u64) -> Array2<f64> {
        let mut r = rng::rng(seed);
        Array2::from_shape_fn(shape, |_| r.sample(StandardNormal))
    }

    fn swappers(k: usize, p: usize, seed: u64) -> Vec<SwapperState> {
        let mut r = rng::rng(seed);
        (0..k).map(|_| SwapperState::random(p, 0.2, &mut r)).collect()
    }

    #[test]
    fn identical_knockoff_has_zero_swap_term() {
        let x = randn((40, 5), 1);
        let (_, b) = swap_loss(x.view(), x.view(), &swappers(2, 5, 2), &LossConfig::default(), &mut rng::rng(3)).unwrap();
        assert!(b.swd_per_swapper.iter().all(|&v| v == 0.0));
        assert_eq!(b.rex, 0.0);
    }

    #[test]
    fn forced_no_swap_has_zero_swap_term() {
        let x = randn((40, 5), 1);
        let xk = randn((40, 5), 2);
        let sw = swappers(2, 5, 3);
        let mut noise = SwapNoise::draw(5, 2, 64, &mut rng::rng(4));
        noise.force_no_swap();
        let b = evaluate_objective(x.view(), xk.view(), &sw, &noise, &LossConfig::default()).unwrap();
        assert!(b.swd_per_swapper.iter().all(|&v| v == 0.0), "{:?}", b.swd_per_swapper);
    }

    #[test]
    fn identical_swappers_have_zero_rex() {
        let x = randn((40, 5), 1);
        let xk = randn((40, 5), 2);
        let one = swappers(1, 5, 3).remove(0);
        let mut noise = SwapNoise::draw(5, 2, 64, &mut rng::rng(4));
        noise.gumbel[1] = noise.gumbel[0].clone();
        let b = evaluate_objective(x.view(), xk.view(), &[one.clone(), one], &noise, &LossConfig::default()).unwrap();
        assert_eq!(b.rex, 0.0);
        assert!(b.swd_per_swapper[0] > 0.0);
        assert!((b.swapper_decor - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rex_examples() {
        assert_eq!(rex_penalty(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(rex_penalty(&[1.0, 3.0]), 1.0);
        assert_eq!(rex_penalty(&[0.0, 0.0, 3.0]), 2.0);
    }

    #[test]
    fn decorrelation_examples() {
        let a = ndarray::array![[1.0, 0.0], [0.0, 0.0]];
        let b = ndarray::array![[0.0, 1.0], [0.0, 0.0]];
        let s = |l: &Array2<f64>| SwapperState::new(l.clone(), 0.2).unwrap();
        assert!((swapper_decorrelation_loss(&[s(&a), s(&a)]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(swapper_decorrelation_loss(&[s(&a), s(&b)]).unwrap(), 0.0);
        assert!((swapper_decorrelation_loss(&[s(&a), s(&(-&a))]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(swapper_decorrelation_loss(&[s(&a)]).unwrap(), 0.0);
        assert!(matches!(
            swapper_decorrelation_loss(&[s(&a), s(&Array2::zeros((2, 2)))]),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn graph_decor_matches_value_level() {
        let sw = swappers(3, 4, 1);
        let x = randn((20, 4), 2);
        let noise = SwapNoise::draw(4, 3, 16, &mut rng::rng(3));
        let b = evaluate_objective(x.view(), randn((20, 4), 4).view(), &sw, &noise, &LossConfig::default()).unwrap();
        assert!((b.swapper_decor - swapper_decorrelation_loss(&sw).unwrap()).abs() < 1e-12);
        assert!((b.rex - rex_penalty(&b.swd_per_swapper)).abs() < 1e-12);
    }

    #[test]
    fn dependency_loss_examples() {
        let x = randn((200, 4), 1);
        let cfg = ProjectionConfig::seeded(128, TransportOrder::W2, 5);
        assert_eq!(dependency_loss(x.view(), x.view(), 20.0, &cfg).unwrap(), 20.0);
        let xk = oracle_knockoff_independent(x.view(), 2);
        assert_eq!(dependency_loss(x.view(), xk.view(), 0.0, &cfg).unwrap(), 0.0);
        assert!(dependency_loss(x.view(), x.slice(ndarray::s![..199, ..]).view(), 1.0, &cfg).is_err());
    }

    #[test]
    fn graph_swc_matches_metric() {
        let x = randn((60, 3), 1);
        let xk = &x * 0.5 + randn((60, 3), 2);
        let seed = 17;
        let cfg = ProjectionConfig::seeded(32, TransportOrder::W2, seed);
        let expected = dependency_loss(x.view(), xk.view(), 1.0, &cfg).unwrap();
        let (dirs, _, _) = metrics::swc_directions(3, 3, 32, seed);
        let mut noise = SwapNoise::draw(3, 1, 32, &mut rng::rng(0));
        noise.swc_dirs = dirs;
        let lc = LossConfig {
            lambda_dep: 1.0,
            num_projections: 32,
            ..Default::default()
        };
        let b = evaluate_objective(x.view(), xk.view(), &swappers(1, 3, 4), &noise, &lc).unwrap();
        assert!((b.drl - expected).abs() < 1e-12, "{} vs {expected}", b.drl);
    }

    #[test]
    fn dependency_monotone_sanity() {
        let cfg = ProjectionConfig::seeded(64, TransportOrder::W2, 9);
        let mut wins = 0;
        for s in 0..20 {
            let x = randn((500, 4), 100 + s);
            let xk = oracle_knockoff_independent(x.view(), 200 + s);
            let same = dependency_loss(x.view(), x.view(), 1.0, &cfg).unwrap();
            let indep = dependency_loss(x.view(), xk.view(), 1.0, &cfg).unwrap();
            wins += usize::from(same > indep);
        }
        assert_eq!(wins, 20);
    }

    #[test]
    fn zero_weights_single_swapper_no_swap() {
        let x = randn((30, 4), 1);
        let xk = randn((30, 4), 2);
        let cfg = LossConfig {
            lambda_rex: 0.0,
            lambda_decor: 0.0,
            lambda_dep: 0.0,
            ..Default::default()
        };
        let mut noise = SwapNoise::draw(4, 1, 16, &mut rng::rng(3));
        noise.force_no_swap();
        let b = evaluate_objective(x.view(), xk.view(), &swappers(1, 4, 5), &noise, &cfg).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn breakdown_recomposes_and_defaults() {
        let d = LossConfig::default();
        assert_eq!((d.lambda_rex, d.lambda_decor, d.lambda_dep), (30.0, 1.0, 20.0));
        let x = randn((31, 4), 1);
        let xk = randn((31, 4), 2);
        let (t, b) = total_objective(x.view(), xk.view(), &swappers(2, 4, 3), &d, &mut rng::rng(4)).unwrap();
        assert_eq!(t, b.total);
        assert!((b.recomposed_total() - b.total).abs() < 1e-10);
        assert!(b.is_finite());
        assert!(b.swd_per_swapper.iter().all(|&v| v >= 0.0) && b.rex >= 0.0 && b.drl >= 0.0);
        let (s, sb) = swap_loss(x.view(), xk.view(), &swappers(2, 4, 3), &d, &mut rng::rng(4)).unwrap();
        assert_eq!(sb.drl, 0.0);
        assert!((s - (b.total - b.drl)).abs() < 1e-12);
    }

    #[test]
    fn no_swappers_is_an_error() {
        let x = randn((8, 2), 1);
        assert!(total_objective(x.view(), x.view(), &[], &LossConfig::default(), &mut rng::rng(1)).is_err());
    }
}
