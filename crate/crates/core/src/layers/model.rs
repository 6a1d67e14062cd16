use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use super::{
    gat_layer, gcn_layer, jk_aggregate, psnr_step, residual_input, residual_step, Backbone,
    EncoderKind, EncoderVars, GatVars, GraphContext, JkAgg, ModelConfig, Noise, PsnrInputs,
    PsnrLayerTrace, ResidualKind,
};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{self, Rng, Stream};
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, PartialEq)]
struct ConvSlots {
    w: usize,
    att: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
enum EncoderSlots {
    Gcn { w: usize, bias: usize },
    Gat { w: usize, a_src: usize, a_dst: usize, bias: usize },
    Sage { w_self: usize, w_neigh: usize, bias: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    convs: Vec<ConvSlots>,
    encoder: Option<EncoderSlots>,
    gamma: Option<usize>,
    classifier: usize,
    classifier_bias: usize,
}

/// A stacked GNN: `depth` graph convolutions, the configured residual
/// wiring, and a linear classifier. Parameters live in a flat list so that
/// optimizers and gradient checks can treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    feat_dim: usize,
    params: Vec<Mat>,
    layout: Layout,
}

/// Per-call forward settings.
#[derive(Debug, Clone)]
pub struct Forward {
    pub train: bool,
    /// Apply the backbone nonlinearity; off for linearized checks.
    pub activate: bool,
    pub dropout_rng: Rng,
    pub noise: Noise,
}

impl Forward {
    pub fn train(dropout_rng: Rng, noise: Noise) -> Self {
        Forward {
            train: true,
            activate: true,
            dropout_rng,
            noise,
        }
    }

    pub fn eval(noise: Noise) -> Self {
        Forward {
            train: false,
            activate: true,
            dropout_rng: Rng::seed_from_u64(0),
            noise,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Var,
    /// Output of every graph layer, `H_1 … H_K`.
    pub layers: Vec<Var>,
    pub traces: Vec<PsnrLayerTrace>,
}

fn xavier(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Mat {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_fn(fan_in, fan_out, |_, _| rng.random_range(-a..a))
}

fn standard_normal(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Initializes a model: graph layers with Xavier-uniform weights, the
/// classifier with standard-normal weights, biases at zero and `γ = 1`.
pub fn build_model(config: &ModelConfig, feat_dim: usize) -> Result<Model> {
    config.validate()?;
    if feat_dim == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    let h = config.hidden;
    let mut rng = rng::stream(config.seed, Stream::Init);
    let mut params = Vec::new();
    let mut push = |m: Mat| {
        params.push(m);
        params.len() - 1
    };

    let mut convs = Vec::with_capacity(config.depth);
    for layer in 1..=config.depth {
        let fan_in = match (layer, config.residual) {
            (1, _) => feat_dim,
            (_, ResidualKind::Dense) => (layer - 1) * h,
            _ => h,
        };
        let w = push(xavier(&mut rng, fan_in, h));
        let att = match config.backbone {
            Backbone::Gcn => None,
            Backbone::Gat => Some((push(xavier(&mut rng, h, 1)), push(xavier(&mut rng, h, 1)))),
        };
        convs.push(ConvSlots { w, att });
    }

    let (encoder, gamma) = match config.residual {
        ResidualKind::Psnr(kind) => {
            let enc = match kind {
                EncoderKind::Gcn => EncoderSlots::Gcn {
                    w: push(xavier(&mut rng, h, 2)),
                    bias: push(Mat::zeros(1, 2)),
                },
                EncoderKind::Gat => EncoderSlots::Gat {
                    w: push(xavier(&mut rng, h, 2)),
                    a_src: push(xavier(&mut rng, 2, 1)),
                    a_dst: push(xavier(&mut rng, 2, 1)),
                    bias: push(Mat::zeros(1, 2)),
                },
                EncoderKind::Sage => EncoderSlots::Sage {
                    w_self: push(xavier(&mut rng, h, 2)),
                    w_neigh: push(xavier(&mut rng, h, 2)),
                    bias: push(Mat::zeros(1, 2)),
                },
            };
            (Some(enc), Some(push(Mat::filled(1, 1, 1.0))))
        }
        _ => (None, None),
    };

    let head_in = match config.residual {
        ResidualKind::Jk(JkAgg::Concat) => config.depth * h,
        _ => h,
    };
    let classifier = push(standard_normal(&mut rng, head_in, config.classes));
    let classifier_bias = push(Mat::zeros(1, config.classes));

    Ok(Model {
        config: config.clone(),
        feat_dim,
        params,
        layout: Layout {
            convs,
            encoder,
            gamma,
            classifier,
            classifier_bias,
        },
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn params(&self) -> &[Mat] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Mat] {
        &mut self.params
    }

    /// Replaces every parameter; shapes must match.
    pub fn set_params(&mut self, params: Vec<Mat>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::shape("set-params", "parameter list does not match the model"));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.as_slice().len()).sum()
    }

    /// Parameters of the shared posterior encoder plus `γ`; zero for
    /// non-PSNR models.
    pub fn encoder_param_count(&self) -> usize {
        let count = |i: usize| self.params[i].as_slice().len();
        let enc = match &self.layout.encoder {
            None => 0,
            Some(EncoderSlots::Gcn { w, bias }) => count(*w) + count(*bias),
            Some(EncoderSlots::Gat { w, a_src, a_dst, bias }) => {
                count(*w) + count(*a_src) + count(*a_dst) + count(*bias)
            }
            Some(EncoderSlots::Sage { w_self, w_neigh, bias }) => {
                count(*w_self) + count(*w_neigh) + count(*bias)
            }
        };
        enc + self.layout.gamma.map_or(0, count)
    }

    /// Input width of each graph convolution, layer 1 first.
    pub fn conv_input_widths(&self) -> Vec<usize> {
        self.layout.convs.iter().map(|c| self.params[c.w].rows()).collect()
    }

    /// Number of PSNR steps (and noise draws) per forward pass.
    pub fn psnr_steps(&self) -> usize {
        match self.config.residual {
            ResidualKind::Psnr(_) => self.config.depth - 1,
            _ => 0,
        }
    }

    pub fn is_psnr(&self) -> bool {
        matches!(self.config.residual, ResidualKind::Psnr(_))
    }

    /// Index of the conv weight of `layer` (1-based) in [`Model::params`].
    pub fn conv_weight_index(&self, layer: usize) -> Option<usize> {
        self.layout.convs.get(layer.checked_sub(1)?).map(|c| c.w)
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    pub fn forward(&self, tape: &mut Tape, ctx: &GraphContext, x: &Mat, fwd: &mut Forward) -> Result<ForwardOutput> {
        let vars = self.register(tape);
        self.forward_vars(tape, &vars, ctx, x, fwd)
    }

    /// Forward pass with parameters already on the tape, in [`Model::params`]
    /// order.
    pub fn forward_vars(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        ctx: &GraphContext,
        x: &Mat,
        fwd: &mut Forward,
    ) -> Result<ForwardOutput> {
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        if x.rows() != ctx.n() || x.cols() != self.feat_dim {
            return Err(Error::shape(
                "model-forward",
                format!("features {:?}, graph {} nodes, model expects {} columns", x.shape(), ctx.n(), self.feat_dim),
            ));
        }
        let cfg = &self.config;
        let x = tape.constant(x.clone());
        let h1 = self.conv(tape, vars, ctx, x, 0, fwd)?;
        let mut layers = vec![h1];
        let mut traces = Vec::new();

        for layer in 2..=cfg.depth {
            let next = match cfg.residual {
                ResidualKind::Psnr(_) => {
                    let prev = *layers.last().expect("nonempty");
                    let h_conv = self.conv(tape, vars, ctx, prev, layer - 1, fwd)?;
                    let (out, trace) = psnr_step(
                        tape,
                        ctx,
                        PsnrInputs { h1, h_conv, k: layer },
                        self.encoder_vars(vars),
                        vars[self.layout.gamma.expect("psnr has gamma")],
                        &mut fwd.noise,
                        layer - 2,
                    )?;
                    traces.push(trace);
                    out
                }
                kind => {
                    let input = residual_input(tape, &kind, &layers)?;
                    let h_conv = self.conv(tape, vars, ctx, input, layer - 1, fwd)?;
                    residual_step(tape, &kind, &layers, h_conv)?
                }
            };
            layers.push(next);
        }

        let head = match cfg.residual {
            ResidualKind::Jk(agg) => jk_aggregate(tape, agg, &layers)?,
            _ => *layers.last().expect("nonempty"),
        };
        let head = tape.dropout(head, cfg.dropout, fwd.train, &mut fwd.dropout_rng)?;
        let z = tape.matmul(head, vars[self.layout.classifier])?;
        let logits = tape.row_broadcast_add(z, vars[self.layout.classifier_bias])?;
        Ok(ForwardOutput {
            logits,
            layers,
            traces,
        })
    }

    fn encoder_vars(&self, vars: &[Var]) -> EncoderVars {
        match self.layout.encoder.as_ref().expect("psnr has an encoder") {
            EncoderSlots::Gcn { w, bias } => EncoderVars::Gcn {
                w: vars[*w],
                bias: vars[*bias],
            },
            EncoderSlots::Gat { w, a_src, a_dst, bias } => EncoderVars::Gat {
                w: vars[*w],
                a_src: vars[*a_src],
                a_dst: vars[*a_dst],
                bias: vars[*bias],
            },
            EncoderSlots::Sage { w_self, w_neigh, bias } => EncoderVars::Sage {
                w_self: vars[*w_self],
                w_neigh: vars[*w_neigh],
                bias: vars[*bias],
            },
        }
    }

    /// Dropout, graph convolution `idx` (0-based) and activation.
    fn conv(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        ctx: &GraphContext,
        input: Var,
        idx: usize,
        fwd: &mut Forward,
    ) -> Result<Var> {
        let slots = &self.layout.convs[idx];
        let input = tape.dropout(input, self.config.dropout, fwd.train, &mut fwd.dropout_rng)?;
        match (self.config.backbone, slots.att) {
            (Backbone::Gat, Some((a_src, a_dst))) => {
                let p = GatVars {
                    w: vars[slots.w],
                    a_src: vars[a_src],
                    a_dst: vars[a_dst],
                };
                let (out, _) = gat_layer(tape, input, &ctx.support, p)?;
                if fwd.activate {
                    tape.elu(out)
                } else {
                    Ok(out)
                }
            }
            _ => gcn_layer(tape, input, &ctx.norm, vars[slots.w], fwd.activate),
        }
    }
}

/// Mean negative log-likelihood of `labels` over `rows`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var> {
    if rows.is_empty() {
        return Err(Error::Contract("cross-entropy over an empty node set".into()));
    }
    let (n, c) = tape.shape(logits);
    if labels.len() != n {
        return Err(Error::shape("cross-entropy", format!("{} labels for {n} rows", labels.len())));
    }
    let lsm = tape.log_softmax_rows(logits)?;
    let picked = tape.row_select(lsm, rows)?;
    let w = -1.0 / rows.len() as f64;
    let mut target = Mat::zeros(rows.len(), c);
    for (r, &i) in rows.iter().enumerate() {
        if labels[i] >= c {
            return Err(Error::shape("cross-entropy", format!("label {} with {c} classes", labels[i])));
        }
        target[(r, labels[i])] = w;
    }
    let target = tape.constant(target);
    let prod = tape.hadamard(picked, target)?;
    tape.sum(prod)
}
