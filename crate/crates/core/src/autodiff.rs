//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! whatever the backward pass needs. [`Graph::backward`] walks the tape in
//! reverse and accumulates gradients. Attention, layer normalization, sliced
//! Wasserstein distance and the binary Gumbel relaxation are fused nodes with
//! hand-written adjoints; everything else is elementwise or matrix algebra.
//!
//! Per-sample work inside fused nodes goes through [`crate::exec`], which keeps
//! results identical between parallel and sequential builds.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::exec;
use crate::metrics::{projected_distance_with_grad, TransportOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddTiled(Var, Var),
    MaskMul(Var, Array2<f64>),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Attention {
        qkv: Var,
        tokens: usize,
        heads: usize,
        probs: Vec<Vec<Array2<f64>>>,
    },
    Reshape(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    Swd {
        a: Var,
        b: Var,
        dirs: Array2<f64>,
        grad_pa: Array2<f64>,
        grad_pb: Array2<f64>,
    },
    GumbelSigmoid {
        logits: Var,
        temperature: f64,
    },
    Cosine(Var, Var),
    Sqrt(Var),
    Div(Var, Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Vec<Var>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Tape of differentiable operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(_) => true,
            Op::Constant => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.dim(), (1, 1));
        m[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn scalar_constant(&mut self, v: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), v))
    }

    /// A trainable leaf tied to slot `slot` of a parameter store.
    pub fn param(&mut self, slot: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Param(slot), &[])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// `a + row` with `row` (1×n) broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    /// `a ⊙ row` with `row` (1×n) broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row), &[a, row])
    }

    /// Adds a T×h block to every consecutive group of T rows of `a`.
    pub fn add_tiled(&mut self, a: Var, tile: Var) -> Var {
        let t = self.value(tile).nrows();
        let mut v = self.value(a).clone();
        let tv = self.value(tile);
        for mut chunk in v.axis_chunks_iter_mut(Axis(0), t) {
            chunk += tv;
        }
        self.push(v, Op::AddTiled(a, tile), &[a, tile])
    }

    pub fn mask_mul(&mut self, a: Var, mask: Array2<f64>) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::MaskMul(a, mask), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a), &[a])
    }

    /// Row-wise layer normalization with affine (1×h) `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let h = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / h;
        let mut xhat = xv - &mean.view().insert_axis(Axis(1));
        let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / h;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        xhat *= &inv_std.view().insert_axis(Axis(1));
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Multi-head scaled dot-product attention. `qkv` is (batch·tokens)×3h,
    /// rows grouped by sample; returns (batch·tokens)×h with heads concatenated.
    pub fn attention(&mut self, qkv: Var, tokens: usize, heads: usize) -> Var {
        let qv = self.value(qkv);
        let rows = qv.nrows();
        let h = qv.ncols() / 3;
        let dh = h / heads;
        let batch = rows / tokens;
        let scale = 1.0 / (dh as f64).sqrt();
        let per_sample = exec::map_indexed(batch, |b| {
            let block = qv.slice(s![b * tokens..(b + 1) * tokens, ..]);
            let mut out = Array2::<f64>::zeros((tokens, h));
            let mut probs = Vec::with_capacity(heads);
            for m in 0..heads {
                let q = block.slice(s![.., m * dh..(m + 1) * dh]);
                let k = block.slice(s![.., h + m * dh..h + (m + 1) * dh]);
                let v = block.slice(s![.., 2 * h + m * dh..2 * h + (m + 1) * dh]);
                let mut p = q.dot(&k.t()) * scale;
                softmax_rows(&mut p);
                out.slice_mut(s![.., m * dh..(m + 1) * dh]).assign(&p.dot(&v));
                probs.push(p);
            }
            (out, probs)
        });
        let mut out = Array2::<f64>::zeros((rows, h));
        let mut all_probs = Vec::with_capacity(batch);
        for (b, (o, p)) in per_sample.into_iter().enumerate() {
            out.slice_mut(s![b * tokens..(b + 1) * tokens, ..]).assign(&o);
            all_probs.push(p);
        }
        self.push(
            out,
            Op::Attention {
                qkv,
                tokens,
                heads,
                probs: all_probs,
            },
            &[qkv],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: (usize, usize)) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), shape.0 * shape.1, "reshape size mismatch");
        let data: Vec<f64> = src.iter().copied().collect();
        let v = Array2::from_shape_vec(shape, data).expect("shape checked");
        self.push(v, Op::Reshape(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<'_, f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start), &[a])
    }

    /// Sliced Wasserstein distance between the rows of two equal-shape
    /// samples along the direction columns of `dirs` (d×L). Returns 1×1.
    pub fn swd(&mut self, a: Var, b: Var, dirs: Array2<f64>, order: TransportOrder) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "swd operands differ in shape");
        let pa = self.value(a).dot(&dirs);
        let pb = self.value(b).dot(&dirs);
        let (value, grad_pa, grad_pb) = projected_distance_with_grad(&pa, &pb, order);
        self.push(
            Array2::from_elem((1, 1), value),
            Op::Swd {
                a,
                b,
                dirs,
                grad_pa,
                grad_pb,
            },
            &[a, b],
        )
    }

    /// Binary Gumbel-softmax relaxation. `logits` is 2×p, `noise` 2×p Gumbel
    /// draws; returns the 1×p probability mass on category 1.
    pub fn gumbel_sigmoid(&mut self, logits: Var, noise: &Array2<f64>, temperature: f64) -> Var {
        let l = self.value(logits);
        let p = l.ncols();
        let v = Array2::from_shape_fn((1, p), |(_, j)| {
            let margin = (l[[1, j]] + noise[[1, j]]) - (l[[0, j]] + noise[[0, j]]);
            sigmoid(margin / temperature)
        });
        self.push(
            v,
            Op::GumbelSigmoid {
                logits,
                temperature,
            },
            &[logits],
        )
    }

    /// Cosine similarity of two flattened tensors. Returns 1×1.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let dot: f64 = av.iter().zip(bv.iter()).map(|(x, y)| x * y).sum();
        let na = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(Array2::from_elem((1, 1), dot / (na * nb)), Op::Cosine(a, b), &[a, b])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        self.push(v, Op::Sqrt(a), &[a])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b), &[a, b])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi), &[a])
    }

    /// Elementwise sum of same-shape nodes, accumulated left to right.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let mut v = self.value(parts[0]).clone();
        for p in &parts[1..] {
            v += self.value(*p);
        }
        self.push(v, Op::Sum(parts.to_vec()), parts)
    }

    pub fn mean(&mut self, parts: &[Var]) -> Var {
        let s = self.sum(parts);
        self.scale(s, 1.0 / parts.len() as f64)
    }

    /// Gradients of the scalar `root` with respect to every node on a path
    /// from a parameter leaf.
    pub fn backward(&self, root: Var) -> Grads {
        self.backward_masked(root, None)
    }

    /// As [`Graph::backward`], but only propagates into nodes that depend on
    /// one of `leaves`.
    pub fn backward_wrt(&self, root: Var, leaves: &[Var]) -> Grads {
        let mut relevant = vec![false; self.nodes.len()];
        for l in leaves {
            relevant[l.0] = true;
        }
        for i in 0..self.nodes.len() {
            if relevant[i] {
                continue;
            }
            relevant[i] = self.inputs(i).iter().any(|v| relevant[v.0]);
        }
        self.backward_masked(root, Some(&relevant))
    }

    fn inputs(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Constant | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MulRow(a, b)
            | Op::AddTiled(a, b)
            | Op::Cosine(a, b)
            | Op::Div(a, b) => vec![*a, *b],
            Op::Swd { a, b, .. } => vec![*a, *b],
            Op::Scale(a, _)
            | Op::MaskMul(a, _)
            | Op::Gelu(a)
            | Op::Reshape(a)
            | Op::SliceRows(a, _)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Clamp(a, _, _) => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Attention { qkv, .. } => vec![*qkv],
            Op::GumbelSigmoid { logits, .. } => vec![*logits],
            Op::ConcatCols(v) | Op::Sum(v) => v.clone(),
        }
    }

    fn backward_masked(&self, root: Var, mask: Option<&[bool]>) -> Grads {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<f64>>> = (0..n).map(|_| None).collect();
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        grads[root.0] = Some(Array2::ones(self.value(root).raw_dim()));

        let wants = |v: Var| -> bool {
            self.nodes[v.0].requires_grad && mask.is_none_or(|m| m[v.0])
        };
        let acc = |grads: &mut Vec<Option<Array2<f64>>>, v: Var, g: Array2<f64>| {
            if !wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        };

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(_) => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads, *a, &g * self.value(*b));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddRow(a, row) => {
                    if wants(*row) {
                        acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    if wants(*row) {
                        let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(&mut grads, *row, gr);
                    }
                    if wants(*a) {
                        acc(&mut grads, *a, &g * self.value(*row));
                    }
                }
                Op::AddTiled(a, tile) => {
                    if wants(*tile) {
                        let t = self.value(*tile).nrows();
                        let mut gt = Array2::<f64>::zeros(self.value(*tile).raw_dim());
                        for chunk in g.axis_chunks_iter(Axis(0), t) {
                            gt += &chunk;
                        }
                        acc(&mut grads, *tile, gt);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::MaskMul(a, mask) => acc(&mut grads, *a, g * mask),
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= gelu_grad(x));
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    if wants(*gamma) {
                        acc(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if wants(*beta) {
                        acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if wants(*x) {
                        let h = xhat.ncols() as f64;
                        let dxhat = &g * self.value(*gamma);
                        let sum_d = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
                        let sum_dx = (&dxhat * xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
                        let mut dx = dxhat * h - &sum_d - &(xhat * &sum_dx);
                        dx *= &(inv_std / h).insert_axis(Axis(1));
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::Attention {
                    qkv,
                    tokens,
                    heads,
                    probs,
                } => {
                    let (tokens, heads) = (*tokens, *heads);
                    let qv = self.value(*qkv);
                    let h = qv.ncols() / 3;
                    let dh = h / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let batch = qv.nrows() / tokens;
                    let blocks = exec::map_indexed(batch, |b| {
                        let rows = s![b * tokens..(b + 1) * tokens, ..];
                        let block = qv.slice(rows);
                        let gout = g.slice(rows);
                        let mut d = Array2::<f64>::zeros((tokens, 3 * h));
                        for m in 0..heads {
                            let (c0, c1) = (m * dh, (m + 1) * dh);
                            let q = block.slice(s![.., c0..c1]);
                            let k = block.slice(s![.., h + c0..h + c1]);
                            let v = block.slice(s![.., 2 * h + c0..2 * h + c1]);
                            let p = &probs[b][m];
                            let go = gout.slice(s![.., c0..c1]);
                            let dv = p.t().dot(&go);
                            let dp = go.dot(&v.t());
                            let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                            let ds = (dp - &row_dot) * p * scale;
                            d.slice_mut(s![.., c0..c1]).assign(&ds.dot(&k));
                            d.slice_mut(s![.., h + c0..h + c1]).assign(&ds.t().dot(&q));
                            d.slice_mut(s![.., 2 * h + c0..2 * h + c1]).assign(&dv);
                        }
                        d
                    });
                    let mut dq = Array2::<f64>::zeros(qv.raw_dim());
                    for (b, d) in blocks.into_iter().enumerate() {
                        dq.slice_mut(s![b * tokens..(b + 1) * tokens, ..]).assign(&d);
                    }
                    acc(&mut grads, *qkv, dq);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).raw_dim();
                    let data: Vec<f64> = g.iter().copied().collect();
                    acc(&mut grads, *a, Array2::from_shape_vec(shape, data).expect("same size"));
                }
                Op::ConcatCols(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if wants(*p) {
                            acc(&mut grads, *p, g.slice(s![.., c..c + w]).to_owned());
                        }
                        c += w;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Array2::<f64>::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Swd {
                    a,
                    b,
                    dirs,
                    grad_pa,
                    grad_pb,
                } => {
                    let up = g[[0, 0]];
                    if wants(*a) {
                        acc(&mut grads, *a, grad_pa.dot(&dirs.t()) * up);
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, grad_pb.dot(&dirs.t()) * up);
                    }
                }
                Op::GumbelSigmoid {
                    logits,
                    temperature,
                } => {
                    let out = &node.value;
                    let p = out.ncols();
                    let mut gl = Array2::<f64>::zeros((2, p));
                    for j in 0..p {
                        let sj = out[[0, j]];
                        let d = g[[0, j]] * sj * (1.0 - sj) / temperature;
                        gl[[1, j]] = d;
                        gl[[0, j]] = -d;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::Cosine(a, b) => {
                    let up = g[[0, 0]];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let na2: f64 = av.iter().map(|x| x * x).sum();
                    let nb2: f64 = bv.iter().map(|x| x * x).sum();
                    let (na, nb) = (na2.sqrt(), nb2.sqrt());
                    let cos = node.value[[0, 0]];
                    if wants(*a) {
                        acc(&mut grads, *a, (bv / (na * nb) - av * (cos / na2)) * up);
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, (av / (na * nb) - bv * (cos / nb2)) * up);
                    }
                }
                Op::Sqrt(a) => {
                    let ga = Zip::from(&g)
                        .and(&node.value)
                        .map_collect(|&gv, &y| if y > 0.0 { gv / (2.0 * y) } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if wants(*a) {
                        acc(&mut grads, *a, &g / bv);
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, -(&g * &node.value) / bv);
                    }
                }
                Op::Square(a) => acc(&mut grads, *a, g * self.value(*a) * 2.0),
                Op::Clamp(a, lo, hi) => {
                    let ga = Zip::from(&g)
                        .and(self.value(*a))
                        .map_collect(|&gv, &x| if x > *lo && x < *hi { gv } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, g.clone());
                    }
                }
            }
        }
        Grads { grads }
    }

    /// Parameter slots referenced by the tape, with their leaf variables.
    pub fn params(&self) -> impl Iterator<Item = (usize, Var)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(slot) => Some((slot, Var(i))),
            _ => None,
        })
    }
}

/// Result of a backward pass.
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Array2<f64>) -> Array2<f64> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    }
}
