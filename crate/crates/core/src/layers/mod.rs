//! Message-passing layers, residual wrappers and the posterior-sampled
//! node-adaptive residual step.
//!
//! Layers operate on a [`Tape`] and take their parameters as [`Var`]s so the
//! same code serves training, evaluation and gradient checks.

mod model;

pub use model::{build_model, cross_entropy, Forward, ForwardOutput, Model};

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{normalize, Csr, Graph, NormKind};
use crate::linalg::Mat;
use crate::rng::Rng;
use crate::tensor::{SparseOperator, Tape, Var};

/// Floor added to `softplus(s)` so that every σ is strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    Gcn,
    Gat,
}

/// Graph layer used as the posterior encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Gcn,
    Gat,
    Sage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JkAgg {
    Concat,
    MaxPool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualKind {
    None,
    /// `H_k = conv(H_{k−1}) + H_{k−1}`
    Res,
    /// `H_k = (1 − α) conv(H_{k−1}) + α H_1`
    InitialRes { alpha: f64 },
    /// Layer `k` convolves the concatenation of all previous outputs.
    Dense,
    /// Plain stack aggregated once at the end.
    Jk(JkAgg),
    Psnr(EncoderKind),
}

impl ResidualKind {
    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::None => "none",
            ResidualKind::Res => "res",
            ResidualKind::InitialRes { .. } => "init-res",
            ResidualKind::Dense => "dense",
            ResidualKind::Jk(JkAgg::Concat) => "jk",
            ResidualKind::Jk(JkAgg::MaxPool) => "jk-maxpool",
            ResidualKind::Psnr(_) => "psnr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub depth: usize,
    pub hidden: usize,
    pub classes: usize,
    pub residual: ResidualKind,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return fail("depth must be at least 1".into());
        }
        if self.hidden == 0 || self.classes == 0 {
            return fail("hidden width and class count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} not in [0,1)", self.dropout));
        }
        match self.residual {
            ResidualKind::InitialRes { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                fail(format!("initial-residual alpha {alpha} outside (0,1)"))
            }
            ResidualKind::Psnr(_) if self.hidden % 2 == 1 => fail(format!(
                "the layer embedding needs an even hidden width, got {}",
                self.hidden
            )),
            _ => Ok(()),
        }
    }
}

/// Per-layer posterior parameters of one PSNR step.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnrLayerTrace {
    /// Index of the layer whose output these coefficients produced.
    pub layer: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: f64,
    pub layer_emb: Vec<f64>,
}

impl PsnrLayerTrace {
    /// `sigmoid(η)` per node.
    pub fn coefficients(&self) -> Vec<f64> {
        self.eta.iter().map(|&e| crate::tensor::sigmoid_scalar(e)).collect()
    }
}

/// Sparse operators derived once from a graph.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub graph: Graph,
    /// `D̃^{-1/2} Ã D̃^{-1/2}`
    pub norm: Arc<SparseOperator>,
    /// Pattern of `Ã`, used as the attention support.
    pub support: Arc<SparseOperator>,
    /// Open-neighbourhood mean.
    pub mean: Arc<SparseOperator>,
}

impl GraphContext {
    pub fn new(graph: &Graph) -> Self {
        GraphContext {
            graph: graph.clone(),
            norm: SparseOperator::new(normalize(graph, NormKind::Symmetric).matrix),
            support: SparseOperator::new(graph.augmented_adjacency()),
            mean: SparseOperator::new(graph.mean_neighbor_operator()),
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// `act(N H W)`, with ReLU as the activation.
pub fn gcn_layer(
    tape: &mut Tape,
    h: Var,
    n: &Arc<SparseOperator>,
    w: Var,
    activate: bool,
) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let out = tape.propagate(n, hw)?;
    if activate {
        tape.relu(out)
    } else {
        Ok(out)
    }
}

/// Parameters of a single-head attention layer.
#[derive(Debug, Clone, Copy)]
pub struct GatVars {
    pub w: Var,
    /// `d′ × 1`
    pub a_src: Var,
    /// `d′ × 1`
    pub a_dst: Var,
}

/// Single-head attention over `Ã`. Returns the aggregated features (no
/// activation) and the attention matrix.
pub fn gat_layer(tape: &mut Tape, h: Var, support: &Arc<SparseOperator>, p: GatVars) -> Result<(Var, Csr)> {
    let z = tape.matmul(h, p.w)?;
    let src = tape.matmul(z, p.a_src)?;
    let dst = tape.matmul(z, p.a_dst)?;
    let out = tape.edge_softmax_aggregate(support, z, src, dst)?;
    let att = tape.attention(out).expect("edge softmax records attention");
    Ok((out, att))
}

/// `H W_self + mean_{j ∈ N(i)} h_j W_neigh`; isolated nodes get no
/// neighbour term.
pub fn sage_layer(
    tape: &mut Tape,
    h: Var,
    mean: &Arc<SparseOperator>,
    w_self: Var,
    w_neigh: Var,
) -> Result<Var> {
    let own = tape.matmul(h, w_self)?;
    let agg = tape.propagate(mean, h)?;
    let nb = tape.matmul(agg, w_neigh)?;
    tape.add(own, nb)
}

/// Sinusoidal layer embedding: entry `2i` is `sin(k / 10000^{2i/d})` and
/// entry `2i + 1` is `cos` of the same angle.
pub fn layer_emb(k: usize, d: usize) -> Result<Vec<f64>> {
    if d % 2 == 1 {
        return Err(Error::Config(format!("layer embedding width {d} must be even")));
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let angle = k as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

/// Source of the standard-normal draws `ζ` in `η = μ + ζσ`.
#[derive(Debug, Clone)]
pub enum Noise {
    Sampled(Rng),
    /// Replays one `n × 1` draw per PSNR step, in order.
    Frozen(Vec<Mat>),
    /// `ζ = 0`, the small-σ limit.
    Disabled,
}

impl Noise {
    /// Frozen draws for `steps` PSNR steps on `n` nodes.
    pub fn frozen(rng: &mut Rng, steps: usize, n: usize) -> Noise {
        Noise::Frozen(
            (0..steps)
                .map(|_| Mat::from_fn(n, 1, |_, _| StandardNormal.sample(rng)))
                .collect(),
        )
    }

    fn draw(&mut self, step: usize, n: usize) -> Result<Mat> {
        match self {
            Noise::Sampled(rng) => Ok(Mat::from_fn(n, 1, |_, _| StandardNormal.sample(rng))),
            Noise::Frozen(draws) => match draws.get(step) {
                Some(z) if z.shape() == (n, 1) => Ok(z.clone()),
                Some(z) => Err(Error::shape("frozen-noise", format!("{:?} for {n} nodes", z.shape()))),
                None => Err(Error::Contract(format!(
                    "frozen noise holds {} draws, step {step} requested",
                    draws.len()
                ))),
            },
            Noise::Disabled => Ok(Mat::zeros(n, 1)),
        }
    }
}

/// Parameters of the shared posterior encoder. `w` maps the hidden width to
/// two columns (μ and raw σ); `bias` is `1 × 2`.
#[derive(Debug, Clone, Copy)]
pub enum EncoderVars {
    Gcn { w: Var, bias: Var },
    Gat { w: Var, a_src: Var, a_dst: Var, bias: Var },
    Sage { w_self: Var, w_neigh: Var, bias: Var },
}

/// Raw `n × 2` encoder output.
pub fn encode(tape: &mut Tape, ctx: &GraphContext, x: Var, enc: EncoderVars) -> Result<Var> {
    let (out, bias) = match enc {
        EncoderVars::Gcn { w, bias } => (gcn_layer(tape, x, &ctx.norm, w, false)?, bias),
        EncoderVars::Gat { w, a_src, a_dst, bias } => {
            (gat_layer(tape, x, &ctx.support, GatVars { w, a_src, a_dst })?.0, bias)
        }
        EncoderVars::Sage { w_self, w_neigh, bias } => {
            (sage_layer(tape, x, &ctx.mean, w_self, w_neigh)?, bias)
        }
    };
    tape.row_broadcast_add(out, bias)
}

/// Inputs of one PSNR step producing layer `k ≥ 2`.
#[derive(Debug, Clone, Copy)]
pub struct PsnrInputs {
    pub h1: Var,
    /// Convolution of the previous layer output, `H′_{k−1}`.
    pub h_conv: Var,
    pub k: usize,
}

/// `H_k = H_1 + diag(sigmoid(η))(H_1 − H′)` with `η = μ + ζσ` and
/// `(μ, s) = encoder(H_1 − H′ + γ LayerEmb(k − 1))`, `σ = softplus(s) + 1e-6`.
/// `step` indexes the noise draw.
pub fn psnr_step(
    tape: &mut Tape,
    ctx: &GraphContext,
    input: PsnrInputs,
    enc: EncoderVars,
    gamma: Var,
    noise: &mut Noise,
    step: usize,
) -> Result<(Var, PsnrLayerTrace)> {
    let PsnrInputs { h1, h_conv, k } = input;
    if k < 2 {
        return Err(Error::Contract(format!("the residual step starts at layer 2, got {k}")));
    }
    if tape.shape(h1) != tape.shape(h_conv) {
        return Err(Error::shape(
            "psnr-step",
            format!("H1 {:?} vs H' {:?}", tape.shape(h1), tape.shape(h_conv)),
        ));
    }
    let (n, d) = tape.shape(h1);
    let emb = layer_emb(k - 1, d)?;
    let layer_err = |e: Error| match e {
        Error::Numeric(reason) => Error::LayerNumeric { layer: k, reason },
        other => other,
    };

    let diff = tape.sub(h1, h_conv)?;
    let emb_var = tape.constant(Mat::from_vec(1, d, emb.clone())?);
    let shifted = tape.scale_by_var(gamma, emb_var)?;
    let enc_in = tape.row_broadcast_add(diff, shifted).map_err(layer_err)?;
    let raw = encode(tape, ctx, enc_in, enc).map_err(layer_err)?;
    let mu = tape.select_cols(raw, 0, 1)?;
    let s = tape.select_cols(raw, 1, 1)?;
    let sp = tape.softplus(s).map_err(layer_err)?;
    let floor = tape.constant(Mat::filled(n, 1, SIGMA_FLOOR));
    let sigma = tape.add(sp, floor)?;
    let zeta = noise.draw(step, n)?;
    let eta = tape.noise_inject(mu, sigma, zeta).map_err(layer_err)?;
    let phi = tape.sigmoid(eta)?;
    let mixed = tape.row_scale(phi, diff)?;
    let out = tape.add(h1, mixed).map_err(layer_err)?;

    let trace = PsnrLayerTrace {
        layer: k,
        mu: tape.value(mu).as_slice().to_vec(),
        sigma: tape.value(sigma).as_slice().to_vec(),
        eta: tape.value(eta).as_slice().to_vec(),
        gamma: tape.value(gamma)[(0, 0)],
        layer_emb: emb,
    };
    Ok((out, trace))
}

/// Input to the convolution of the next layer: the concatenation of every
/// previous output for dense connections, the last output otherwise.
pub fn residual_input(tape: &mut Tape, kind: &ResidualKind, history: &[Var]) -> Result<Var> {
    let last = *history
        .last()
        .ok_or_else(|| Error::Contract("residual step needs at least one stored layer".into()))?;
    match kind {
        ResidualKind::Dense if history.len() > 1 => tape.concat_cols(history),
        _ => Ok(last),
    }
}

/// Combines the convolution output of layer `history.len() + 1` with the
/// stored history. PSNR goes through [`psnr_step`] instead.
pub fn residual_step(tape: &mut Tape, kind: &ResidualKind, history: &[Var], h_conv: Var) -> Result<Var> {
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::Contract("residual step needs at least one stored layer".into())),
    };
    match *kind {
        ResidualKind::None | ResidualKind::Dense | ResidualKind::Jk(_) => Ok(h_conv),
        ResidualKind::Res => tape.add(h_conv, last),
        ResidualKind::InitialRes { alpha } => {
            let a = tape.scale(h_conv, 1.0 - alpha)?;
            let b = tape.scale(first, alpha)?;
            tape.add(a, b)
        }
        ResidualKind::Psnr(_) => Err(Error::Contract(
            "PSNR layers are produced by psnr_step".into(),
        )),
    }
}

/// Final jumping-knowledge aggregation over all layer outputs.
pub fn jk_aggregate(tape: &mut Tape, agg: JkAgg, history: &[Var]) -> Result<Var> {
    if history.is_empty() {
        return Err(Error::Contract("jumping knowledge needs stored layers".into()));
    }
    match agg {
        JkAgg::Concat => tape.concat_cols(history),
        JkAgg::MaxPool => tape.max_elementwise(history),
    }
}

#[cfg(test)]
mod tests;
