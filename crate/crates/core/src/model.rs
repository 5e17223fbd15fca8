//! The knockoff generator and the Gumbel-softmax swappers.
//!
//! The generator is a pre-norm transformer encoder over per-coordinate tokens.
//! Token `j` of a row is the pair `(x_j, z_j)` embedded linearly into the
//! hidden width, plus a learned positional vector. After the encoder stack a
//! final layer norm and a linear head map each token back to one scalar, so a
//! `b×p` input gives a `b×p` knockoff.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnockoffNetConfig {
    pub num_heads: usize,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl KnockoffNetConfig {
    /// 8 heads, 8 layers, width 512.
    pub fn large() -> Self {
        Self {
            num_heads: 8,
            num_layers: 8,
            hidden_dim: 512,
            ffn_dim: 1024,
            dropout: 0.1,
        }
    }

    /// Sized for a single workstation core.
    pub fn desk() -> Self {
        Self {
            num_heads: 4,
            num_layers: 4,
            hidden_dim: 128,
            ffn_dim: 256,
            dropout: 0.1,
        }
    }

    /// Small enough for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            num_heads: 2,
            num_layers: 2,
            hidden_dim: 16,
            ffn_dim: 32,
            dropout: 0.1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "large" => Ok(Self::large()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::invalid(format!("unknown network preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.num_layers == 0 || self.hidden_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::invalid("network sizes must be positive"));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::invalid(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

impl Default for KnockoffNetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// Per-layer parameter count; the order below is the push order in `init`.
const LAYER_SLOTS: usize = 12;
const LN1_G: usize = 0;
const LN1_B: usize = 1;
const W_QKV: usize = 2;
const B_QKV: usize = 3;
const W_O: usize = 4;
const B_O: usize = 5;
const LN2_G: usize = 6;
const LN2_B: usize = 7;
const W_FF1: usize = 8;
const B_FF1: usize = 9;
const W_FF2: usize = 10;
const B_FF2: usize = 11;

/// Generator weights with the configuration they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnockoffNet {
    pub config: KnockoffNetConfig,
    pub p: usize,
    pub params: ParamStore,
}

/// Linear-layer initialization: `U(−1/√fan_in, 1/√fan_in)` for both the
/// weight and the bias.
fn linear(r: &mut Rng, fan_in: usize, fan_out: usize) -> (Array2<f64>, Array2<f64>) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let w = Array2::from_shape_fn((fan_in, fan_out), |_| u.sample(r));
    let b = Array2::from_shape_fn((1, fan_out), |_| u.sample(r));
    (w, b)
}

impl KnockoffNet {
    pub fn new(p: usize, config: KnockoffNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if p < 1 {
            return Err(Error::invalid("p must be positive"));
        }
        let mut r = rng::rng(seed);
        let (h, f) = (config.hidden_dim, config.ffn_dim);
        let mut ps = ParamStore::new();
        let (w, b) = linear(&mut r, 2, h);
        ps.push("embed.w", w);
        ps.push("embed.b", b);
        ps.push("pos", Array2::from_shape_fn((p, h), |_| r.sample(StandardNormal)));
        for l in 0..config.num_layers {
            ps.push(format!("layer{l}.ln1.g"), Array2::ones((1, h)));
            ps.push(format!("layer{l}.ln1.b"), Array2::zeros((1, h)));
            let (w, b) = linear(&mut r, h, 3 * h);
            ps.push(format!("layer{l}.qkv.w"), w);
            ps.push(format!("layer{l}.qkv.b"), b);
            let (w, b) = linear(&mut r, h, h);
            ps.push(format!("layer{l}.out.w"), w);
            ps.push(format!("layer{l}.out.b"), b);
            ps.push(format!("layer{l}.ln2.g"), Array2::ones((1, h)));
            ps.push(format!("layer{l}.ln2.b"), Array2::zeros((1, h)));
            let (w, b) = linear(&mut r, h, f);
            ps.push(format!("layer{l}.ff1.w"), w);
            ps.push(format!("layer{l}.ff1.b"), b);
            let (w, b) = linear(&mut r, f, h);
            ps.push(format!("layer{l}.ff2.w"), w);
            ps.push(format!("layer{l}.ff2.b"), b);
        }
        ps.push("final.ln.g", Array2::ones((1, h)));
        ps.push("final.ln.b", Array2::zeros((1, h)));
        let (w, b) = linear(&mut r, h, 1);
        ps.push("head.w", w);
        ps.push("head.b", b);
        Ok(Self { config, p, params: ps })
    }

    fn layer_slot(l: usize, k: usize) -> usize {
        3 + l * LAYER_SLOTS + k
    }

    fn tail_slot(&self, k: usize) -> usize {
        3 + self.config.num_layers * LAYER_SLOTS + k
    }

    fn check_inputs(&self, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.p {
            return Err(Error::shape(self.p, x.ncols()));
        }
        if x.dim() != z.dim() {
            return Err(Error::shape(x.dim(), z.dim()));
        }
        if z.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::invalid("noise entries must lie in [0, 1)"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator input".into()));
        }
        if !self.params.all_finite() {
            return Err(Error::NonFinite("generator weights".into()));
        }
        Ok(())
    }

    /// Registers every weight as a trainable leaf of `g`, in slot order.
    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        (0..self.params.len())
            .map(|slot| g.param(slot, self.params.get(slot).clone()))
            .collect()
    }

    /// Appends the forward pass to `g` and returns the `b×p` output node.
    /// Dropout masks are drawn from `dropout_rng` in train mode.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        w: &[Var],
        x: ArrayView2<'_, f64>,
        z: ArrayView2<'_, f64>,
        mode: Mode,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<Var> {
        self.check_inputs(x, z)?;
        let (b, p) = x.dim();
        let cfg = &self.config;
        let tokens = Array2::from_shape_fn((b * p, 2), |(r, c)| {
            let (i, j) = (r / p, r % p);
            if c == 0 {
                x[[i, j]]
            } else {
                z[[i, j]]
            }
        });
        let tokens = g.constant(tokens);
        let e = g.matmul(tokens, w[0]);
        let e = g.add_row(e, w[1]);
        let mut hid = g.add_tiled(e, w[2]);

        let keep = 1.0 - cfg.dropout;
        let mut dropout = |g: &mut Graph, v: Var| -> Var {
            match (mode, dropout_rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if cfg.dropout > 0.0 => {
                    let shape = g.value(v).raw_dim();
                    let mask = Array2::from_shape_fn(shape, |_| {
                        if r.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    g.mask_mul(v, mask)
                }
                _ => v,
            }
        };

        for l in 0..cfg.num_layers {
            let s = |k| w[Self::layer_slot(l, k)];
            let a = g.layer_norm(hid, s(LN1_G), s(LN1_B));
            let qkv = g.matmul(a, s(W_QKV));
            let qkv = g.add_row(qkv, s(B_QKV));
            let att = g.attention(qkv, p, cfg.num_heads);
            let o = g.matmul(att, s(W_O));
            let o = g.add_row(o, s(B_O));
            let o = dropout(g, o);
            hid = g.add(hid, o);

            let m = g.layer_norm(hid, s(LN2_G), s(LN2_B));
            let m = g.matmul(m, s(W_FF1));
            let m = g.add_row(m, s(B_FF1));
            let m = g.gelu(m);
            let m = g.matmul(m, s(W_FF2));
            let m = g.add_row(m, s(B_FF2));
            let m = dropout(g, m);
            hid = g.add(hid, m);
        }
        let out = g.layer_norm(hid, w[self.tail_slot(0)], w[self.tail_slot(1)]);
        let out = g.matmul(out, w[self.tail_slot(2)]);
        let out = g.add_row(out, w[self.tail_slot(3)]);
        Ok(g.reshape(out, (b, p)))
    }

    /// Eval-mode forward pass in row chunks to bound memory.
    pub fn forward(&self, x: ArrayView2<'_, f64>, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_inputs(x, z)?;
        const CHUNK: usize = 128;
        let mut out = Array2::<f64>::zeros(x.raw_dim());
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + CHUNK).min(x.nrows());
            let mut g = Graph::new();
            let w = self.register(&mut g);
            let rows = ndarray::s![start..end, ..];
            let v = self.forward_graph(&mut g, &w, x.slice(rows), z.slice(rows), Mode::Eval, None)?;
            out.slice_mut(rows).assign(g.value(v));
            start = end;
        }
        Ok(out)
    }

    /// Knockoff for every row of `x` with fresh uniform noise from `seed`.
    pub fn generate(&self, x: ArrayView2<'_, f64>, seed: u64) -> Result<Array2<f64>> {
        let z = uniform_noise(x.dim(), seed);
        self.forward(x, z.view())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, &Checkpoint::new(self))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = crate::io::read_json(path)?;
        ck.into_net()
    }
}

/// `Z ~ U[0, 1)` of the given shape.
pub fn uniform_noise(shape: (usize, usize), seed: u64) -> Array2<f64> {
    let mut r = rng::rng(seed);
    Array2::from_shape_fn(shape, |_| r.random::<f64>())
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk generator checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: KnockoffNetConfig,
    pub p: usize,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(net: &KnockoffNet) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config: net.config,
            p: net.p,
            params: net.params.clone(),
        }
    }

    pub fn into_net(self) -> Result<KnockoffNet> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let reference = KnockoffNet::new(self.p, self.config, 0)?;
        let shapes_match = reference.params.len() == self.params.len()
            && reference
                .params
                .iter()
                .zip(self.params.iter())
                .all(|((na, a), (nb, b))| na == nb && a.dim() == b.dim());
        if !shapes_match {
            return Err(Error::Parse("checkpoint weights do not match its config".into()));
        }
        Ok(KnockoffNet {
            config: self.config,
            p: self.p,
            params: self.params,
        })
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// One swapper: a 2×p logit matrix and the Gumbel-softmax temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapperState {
    pub logits: Array2<f64>,
    pub temperature: f64,
}

impl SwapperState {
    pub fn new(logits: Array2<f64>, temperature: f64) -> Result<Self> {
        if logits.nrows() != 2 {
            return Err(Error::shape((2, logits.ncols()), logits.dim()));
        }
        if !(temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { logits, temperature })
    }

    /// Standard-normal logits.
    pub fn random(p: usize, temperature: f64, r: &mut Rng) -> Self {
        Self {
            logits: Array2::from_shape_fn((2, p), |_| r.sample(StandardNormal)),
            temperature,
        }
    }

    pub fn p(&self) -> usize {
        self.logits.ncols()
    }
}

/// 2×p standard Gumbel draws.
pub fn gumbel_noise(p: usize, r: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((2, p), |_| {
        // u in (0, 1): avoid ln(0) at either end.
        let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
        -(-u.ln()).ln()
    })
}

/// Probability mass on category 1 of the tempered two-way softmax, given the
/// Gumbel draws.
pub fn relaxed_from_noise(state: &SwapperState, noise: &Array2<f64>) -> Array1<f64> {
    let l = &state.logits;
    Array1::from_shape_fn(state.p(), |j| {
        let margin = ((l[[1, j]] + noise[[1, j]]) - (l[[0, j]] + noise[[0, j]])) / state.temperature;
        if margin >= 0.0 {
            1.0 / (1.0 + (-margin).exp())
        } else {
            let e = margin.exp();
            e / (1.0 + e)
        }
    })
}

/// Samples a swap indicator: relaxed values in `[0, 1]`, or hard values in
/// `{0, 1}` (the argmax of the same perturbed logits).
pub fn swapper_sample(state: &SwapperState, r: &mut Rng, relaxed: bool) -> Array1<f64> {
    let noise = gumbel_noise(state.p(), r);
    if relaxed {
        relaxed_from_noise(state, &noise)
    } else {
        let l = &state.logits;
        Array1::from_shape_fn(state.p(), |j| {
            if l[[1, j]] + noise[[1, j]] > l[[0, j]] + noise[[0, j]] {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Column-wise convex exchange: `X_sw = (1 − b)·X + b·X̃`, `X̃_sw = b·X + (1 − b)·X̃`.
pub fn apply_swap(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    b: &Array1<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.dim() != xk.dim() {
        return Err(Error::shape(x.dim(), xk.dim()));
    }
    if b.len() != x.ncols() {
        return Err(Error::shape(x.ncols(), b.len()));
    }
    if b.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("swap indicators must lie in [0, 1]"));
    }
    // Written as a convex combination so b = 0 and b = 1 are exact.
    let keep = b.mapv(|v| 1.0 - v);
    Ok((&x * &keep + &xk * b, &x * b + &xk * &keep))
}

/// Hard swap on the index set `swap`.
pub fn swap_columns(
    x: ArrayView2<'_, f64>,
    xk: ArrayView2<'_, f64>,
    swap: &[usize],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut b = Array1::zeros(x.ncols());
    for &j in swap {
        if j >= b.len() {
            return Err(Error::invalid(format!("swap index {j} out of range")));
        }
        b[j] = 1.0;
    }
    apply_swap(x, xk, &b)
}
