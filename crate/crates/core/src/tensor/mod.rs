//! Single-use reverse-mode tape over dense matrices.
//!
//! Every forward primitive records its inputs on the [`Tape`] and returns a
//! [`Var`] handle. [`Tape::backward`] consumes the tape and returns the
//! gradients of every leaf that was created as trainable.

mod adam;
mod grad_check;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use grad_check::{finite_difference_check, finite_difference_check_multi};

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Csr;
use crate::linalg::Mat;
use crate::par::ExecMode;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A constant sparse operator with its transpose cached for the backward pass.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    forward: Csr,
    transposed: Csr,
}

impl SparseOperator {
    pub fn new(matrix: Csr) -> Arc<Self> {
        let transposed = matrix.transpose();
        Arc::new(SparseOperator {
            forward: matrix,
            transposed,
        })
    }

    pub fn matrix(&self) -> &Csr {
        &self.forward
    }
}

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    ScaleByVar(Var, Var),
    Hadamard(Var, Var),
    RowBroadcastAdd(Var, Var),
    RowScale(Var, Var),
    Sigmoid(Var),
    Relu(Var),
    Elu(Var),
    Softplus(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SelectCols(Var, usize),
    RowSelect(Var, Vec<usize>),
    Dropout(Var, Mat),
    NoiseInject { mu: Var, sigma: Var, zeta: Mat },
    Propagate(Var, Arc<SparseOperator>),
    Sum(Var),
    MaxElementwise(Vec<Var>),
    EdgeSoftmaxAggregate {
        z: Var,
        src: Var,
        dst: Var,
        support: Arc<SparseOperator>,
        pre: Vec<f64>,
        alpha: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. Not shareable across threads; build one per forward
/// pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    mode: ExecMode,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

pub fn softplus_scalar(x: f64) -> f64 {
    softplus(x)
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Tape whose sparse products may use the parallel executor.
    pub fn with_mode(mode: ExecMode) -> Tape {
        Tape {
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf: its gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Mat) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Mat, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).add(self.value(b));
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("subtract", a, b)?;
        let out = self.value(a).sub(self.value(b));
        self.push("subtract", out, Op::Sub(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).scale(s);
        self.push("scale", out, Op::Scale(a, s), &[a])
    }

    /// `s * x` for a 1×1 variable `s`.
    pub fn scale_by_var(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::shape("scale-by-var", format!("scalar is {:?}", self.shape(s))));
        }
        let out = self.value(x).scale(self.value(s)[(0, 0)]);
        self.push("scale-by-var", out, Op::ScaleByVar(s, x), &[s, x])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).hadamard(self.value(b));
        self.push("hadamard", out, Op::Hadamard(a, b), &[a, b])
    }

    /// Adds the `1×d` row `b` to every row of the `n×d` matrix `a`.
    pub fn row_broadcast_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, d) = self.shape(a);
        if self.shape(b) != (1, d) {
            return Err(Error::shape(
                "row-broadcast-add",
                format!("{:?} + {:?}", (n, d), self.shape(b)),
            ));
        }
        let row = self.value(b).row(0).to_vec();
        let mut out = self.value(a).clone();
        for i in 0..n {
            for (o, r) in out.row_mut(i).iter_mut().zip(&row) {
                *o += r;
            }
        }
        self.push("row-broadcast-add", out, Op::RowBroadcastAdd(a, b), &[a, b])
    }

    /// `diag(c) · x` for an `n×1` column `c`.
    pub fn row_scale(&mut self, c: Var, x: Var) -> Result<Var> {
        let (n, _) = self.shape(x);
        if self.shape(c) != (n, 1) {
            return Err(Error::shape(
                "row-scale",
                format!("coefficients {:?} for {:?}", self.shape(c), self.shape(x)),
            ));
        }
        let coef = self.value(c).as_slice().to_vec();
        let out = self.value(x).scale_rows(&coef);
        self.push("row-scale", out, Op::RowScale(c, x), &[c, x])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push("relu", out, Op::Relu(a), &[a])
    }

    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push("elu", out, Op::Elu(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(softplus);
        self.push("softplus", out, Op::Softplus(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let row = out.row_mut(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push("log-softmax-rows", out, Op::LogSoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat-cols", "no inputs"));
        }
        let mats: Vec<&Mat> = parts.iter().map(|v| self.value(*v)).collect();
        let out = Mat::concat_cols(&mats)?;
        self.push("concat-cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn select_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (_, d) = self.shape(a);
        if start + len > d {
            return Err(Error::shape("select-cols", format!("{start}+{len} > {d}")));
        }
        let out = self.value(a).select_cols(start, len);
        self.push("select-cols", out, Op::SelectCols(a, start), &[a])
    }

    pub fn row_select(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (n, _) = self.shape(a);
        if let Some(bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape("row-select", format!("row {bad} of {n}")));
        }
        let out = self.value(a).select_rows(rows);
        self.push("row-select", out, Op::RowSelect(a, rows.to_vec()), &[a])
    }

    /// Inverted dropout. With `train == false` or `p == 0` the input handle
    /// is returned unchanged.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0,1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let (n, d) = self.shape(a);
        let keep = 1.0 / (1.0 - p);
        let mask = Mat::from_fn(n, d, |_, _| if rng.random::<f64>() < p { 0.0 } else { keep });
        let out = self.value(a).hadamard(&mask);
        self.push("dropout", out, Op::Dropout(a, mask), &[a])
    }

    /// `mu + zeta ⊙ sigma` with `zeta` held constant, so gradients reach
    /// `mu` and `sigma` only.
    pub fn noise_inject(&mut self, mu: Var, sigma: Var, zeta: Mat) -> Result<Var> {
        self.same_shape("gaussian-noise-inject", mu, sigma)?;
        if zeta.shape() != self.shape(mu) {
            return Err(Error::shape(
                "gaussian-noise-inject",
                format!("noise {:?} for {:?}", zeta.shape(), self.shape(mu)),
            ));
        }
        let out = self.value(mu).add(&self.value(sigma).hadamard(&zeta));
        self.push(
            "gaussian-noise-inject",
            out,
            Op::NoiseInject { mu, sigma, zeta },
            &[mu, sigma],
        )
    }

    /// Draws standard-normal noise from `rng` and calls
    /// [`Tape::noise_inject`].
    pub fn gaussian_noise_inject(&mut self, mu: Var, sigma: Var, rng: &mut impl Rng) -> Result<Var> {
        let (n, d) = self.shape(mu);
        let zeta = Mat::from_fn(n, d, |_, _| StandardNormal.sample(rng));
        self.noise_inject(mu, sigma, zeta)
    }

    /// Sparse-dense product with a constant operator.
    pub fn propagate(&mut self, op: &Arc<SparseOperator>, x: Var) -> Result<Var> {
        if op.forward.cols() != self.shape(x).0 {
            return Err(Error::shape(
                "propagate",
                format!("operator {}x{} on {:?}", op.forward.rows(), op.forward.cols(), self.shape(x)),
            ));
        }
        let out = op.forward.spmm(self.value(x), self.mode);
        self.push("propagate", out, Op::Propagate(x, Arc::clone(op)), &[x])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Mat::filled(1, 1, self.value(a).sum());
        self.push("sum", out, Op::Sum(a), &[a])
    }

    /// Entrywise maximum across same-shaped inputs; ties go to the earliest.
    pub fn max_elementwise(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("max-elementwise", "no inputs"))?;
        for p in &parts[1..] {
            self.same_shape("max-elementwise", first, *p)?;
        }
        let mut out = self.value(first).clone();
        for p in &parts[1..] {
            out = out.zip_map(self.value(*p), f64::max);
        }
        self.push("max-elementwise", out, Op::MaxElementwise(parts.to_vec()), parts)
    }

    /// Single-head attention aggregation over the sparsity pattern of
    /// `support`: `e_ij = LeakyReLU(src_i + dst_j)`, `α = softmax_j(e)`,
    /// output row `i` is `Σ_j α_ij z_j`.
    pub fn edge_softmax_aggregate(
        &mut self,
        support: &Arc<SparseOperator>,
        z: Var,
        src: Var,
        dst: Var,
    ) -> Result<Var> {
        let (n, d) = self.shape(z);
        if self.shape(src) != (n, 1) || self.shape(dst) != (n, 1) || support.forward.rows() != n {
            return Err(Error::shape(
                "edge-softmax",
                format!(
                    "z {:?}, src {:?}, dst {:?}, support {}",
                    (n, d),
                    self.shape(src),
                    self.shape(dst),
                    support.forward.rows()
                ),
            ));
        }
        let csr = &support.forward;
        let s = self.value(src).as_slice();
        let t = self.value(dst).as_slice();
        let zv = self.value(z);
        let mut pre = Vec::with_capacity(csr.nnz());
        let mut alpha = Vec::with_capacity(csr.nnz());
        let mut out = Mat::zeros(n, d);
        for i in 0..n {
            let start = alpha.len();
            let mut m = f64::NEG_INFINITY;
            for (j, _) in csr.row(i) {
                let p = s[i] + t[j];
                pre.push(p);
                let e = if p > 0.0 { p } else { LEAKY_SLOPE * p };
                m = m.max(e);
                alpha.push(e);
            }
            let row = &mut alpha[start..];
            let mut total = 0.0;
            for a in row.iter_mut() {
                *a = (*a - m).exp();
                total += *a;
            }
            row.iter_mut().for_each(|a| *a /= total);
            let dst_row = out.row_mut(i);
            for (k, (j, _)) in csr.row(i).enumerate() {
                let a = alpha[start + k];
                for (o, zj) in dst_row.iter_mut().zip(zv.row(j)) {
                    *o += a * zj;
                }
            }
        }
        self.push(
            "edge-softmax",
            out,
            Op::EdgeSoftmaxAggregate {
                z,
                src,
                dst,
                support: Arc::clone(support),
                pre,
                alpha,
            },
            &[z, src, dst],
        )
    }

    /// Attention coefficients recorded by [`Tape::edge_softmax_aggregate`].
    pub fn attention(&self, v: Var) -> Option<Csr> {
        match &self.nodes[v.0].op {
            Op::EdgeSoftmaxAggregate { support, alpha, .. } => {
                let csr = &support.forward;
                let mut indptr = vec![0];
                let mut indices = Vec::with_capacity(alpha.len());
                for i in 0..csr.rows() {
                    indices.extend(csr.row(i).map(|(j, _)| j));
                    indptr.push(indices.len());
                }
                Some(Csr::from_parts(csr.rows(), csr.cols(), indptr, indices, alpha.clone()))
            }
            _ => None,
        }
    }

    /// Reverse sweep from a 1×1 loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let Tape { nodes, .. } = self;
        let mut grads: Vec<Option<Mat>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(Mat::filled(1, 1, 1.0));

        fn acc(nodes: &[Node], grads: &mut [Option<Mat>], v: Var, g: Mat) {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[a.0].requires_grad {
                        acc(&nodes, &mut grads, *a, g.matmul_unchecked(val(*b), false, true));
                    }
                    if nodes[b.0].requires_grad {
                        acc(&nodes, &mut grads, *b, val(*a).matmul_unchecked(&g, true, false));
                    }
                }
                Op::Add(a, b) => {
                    acc(&nodes, &mut grads, *b, g.clone());
                    acc(&nodes, &mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&nodes, &mut grads, *b, g.scale(-1.0));
                    acc(&nodes, &mut grads, *a, g);
                }
                Op::Scale(a, s) => acc(&nodes, &mut grads, *a, g.scale(*s)),
                Op::ScaleByVar(s, x) => {
                    let sv = val(*s)[(0, 0)];
                    let ds = g.hadamard(val(*x)).sum();
                    acc(&nodes, &mut grads, *s, Mat::filled(1, 1, ds));
                    acc(&nodes, &mut grads, *x, g.scale(sv));
                }
                Op::Hadamard(a, b) => {
                    acc(&nodes, &mut grads, *a, g.hadamard(val(*b)));
                    acc(&nodes, &mut grads, *b, g.hadamard(val(*a)));
                }
                Op::RowBroadcastAdd(a, b) => {
                    let mut db = Mat::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in db.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    acc(&nodes, &mut grads, *b, db);
                    acc(&nodes, &mut grads, *a, g);
                }
                Op::RowScale(c, x) => {
                    let xv = val(*x);
                    let dc = Mat::from_fn(xv.rows(), 1, |i, _| {
                        g.row(i).iter().zip(xv.row(i)).map(|(a, b)| a * b).sum()
                    });
                    acc(&nodes, &mut grads, *c, dc);
                    acc(&nodes, &mut grads, *x, g.scale_rows(val(*c).as_slice()));
                }
                Op::Sigmoid(a) => {
                    let dx = g.zip_map(&node.value, |g, s| g * s * (1.0 - s));
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::Relu(a) => {
                    let dx = g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::Elu(a) => {
                    let dx = g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { g * x.exp() });
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::Softplus(a) => {
                    let dx = g.zip_map(val(*a), |g, x| g * sigmoid(x));
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut dx = g.clone();
                    for i in 0..g.rows() {
                        let total: f64 = g.row(i).iter().sum();
                        for (o, lp) in dx.row_mut(i).iter_mut().zip(node.value.row(i)) {
                            *o -= lp.exp() * total;
                        }
                    }
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = nodes[p.0].value.cols();
                        acc(&nodes, &mut grads, *p, g.select_cols(offset, w));
                        offset += w;
                    }
                }
                Op::SelectCols(a, start) => {
                    let (n, d) = val(*a).shape();
                    let mut dx = Mat::zeros(n, d);
                    for i in 0..n {
                        dx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::RowSelect(a, rows) => {
                    let (n, d) = val(*a).shape();
                    let mut dx = Mat::zeros(n, d);
                    for (r, &i) in rows.iter().enumerate() {
                        for (o, v) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&nodes, &mut grads, *a, dx);
                }
                Op::Dropout(a, mask) => acc(&nodes, &mut grads, *a, g.hadamard(mask)),
                Op::NoiseInject { mu, sigma, zeta } => {
                    acc(&nodes, &mut grads, *sigma, g.hadamard(zeta));
                    acc(&nodes, &mut grads, *mu, g);
                }
                Op::Propagate(x, op) => {
                    if nodes[x.0].requires_grad {
                        let dx = op.transposed.spmm(&g, ExecMode::Serial);
                        acc(&nodes, &mut grads, *x, dx);
                    }
                }
                Op::Sum(a) => {
                    let (n, d) = val(*a).shape();
                    acc(&nodes, &mut grads, *a, Mat::filled(n, d, g[(0, 0)]));
                }
                Op::MaxElementwise(parts) => {
                    let shape = node.value.shape();
                    let mut taken = vec![false; shape.0 * shape.1];
                    for p in parts {
                        let mut dp = Mat::zeros(shape.0, shape.1);
                        let pv = nodes[p.0].value.as_slice();
                        for (k, (&x, &m)) in pv.iter().zip(node.value.as_slice()).enumerate() {
                            if !taken[k] && x == m {
                                taken[k] = true;
                                dp.as_mut_slice()[k] = g.as_slice()[k];
                            }
                        }
                        acc(&nodes, &mut grads, *p, dp);
                    }
                }
                Op::EdgeSoftmaxAggregate {
                    z,
                    src,
                    dst,
                    support,
                    pre,
                    alpha,
                } => {
                    let csr = &support.forward;
                    let zv = val(*z);
                    let n = csr.rows();
                    let mut dz = Mat::zeros(zv.rows(), zv.cols());
                    let mut dsrc = Mat::zeros(n, 1);
                    let mut ddst = Mat::zeros(n, 1);
                    let mut k0 = 0;
                    for i in 0..n {
                        let gi = g.row(i);
                        let cols: Vec<usize> = csr.row(i).map(|(j, _)| j).collect();
                        let a = &alpha[k0..k0 + cols.len()];
                        let dalpha: Vec<f64> = cols
                            .iter()
                            .map(|&j| gi.iter().zip(zv.row(j)).map(|(x, y)| x * y).sum())
                            .collect();
                        let weighted: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
                        for (k, &j) in cols.iter().enumerate() {
                            for (o, v) in dz.row_mut(j).iter_mut().zip(gi) {
                                *o += a[k] * v;
                            }
                            let de = a[k] * (dalpha[k] - weighted);
                            let slope = if pre[k0 + k] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                            let dp = de * slope;
                            dsrc[(i, 0)] += dp;
                            ddst[(j, 0)] += dp;
                        }
                        k0 += cols.len();
                    }
                    acc(&nodes, &mut grads, *z, dz);
                    acc(&nodes, &mut grads, *src, dsrc);
                    acc(&nodes, &mut grads, *dst, ddst);
                }
            }
        }

        let trainable = nodes
            .iter()
            .map(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .collect();
        Ok(Gradients { grads, trainable })
    }
}

/// Gradients of trainable leaves, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    trainable: Vec<bool>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for constants, intermediates,
    /// and leaves the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Mat> {
        if self.trainable.get(v.0).copied().unwrap_or(false) {
            self.grads[v.0].as_ref()
        } else {
            None
        }
    }

    /// Gradient of a trainable leaf, or zeros of `shape` if unreached.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(shape.0, shape.1))
    }
}
