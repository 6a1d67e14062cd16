//! Rank-one convergence of products of distinct row-stochastic matrices
//! against powers of a single one.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::oscillation;
use crate::error::{Error, Result};
use crate::graph::{normalize, row_normalized_weighted, Graph, NormKind};
use crate::linalg::Mat;
use crate::par::{self, ExecMode};
use crate::rng::{self, Stream};

/// Slack allowed when checking that an oscillation sequence does not grow.
pub const OSC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `S_k ⋯ S_1 X` with `S_j = rownorm(Ã Λ_j)`.
    Product,
    /// `N_rw^k X`.
    Plain,
    /// `Λ_k N ⋯ Λ_1 N X` with the symmetric `N`; sub-stochastic, logged only.
    Raw,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Product => "product",
            Family::Plain => "plain",
            Family::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Config {
    pub k_max: usize,
    /// Lower end of the `Λ_j` entries, drawn from `[eps_low, 1)`.
    pub eps_low: f64,
    pub feat_dim: usize,
    /// Pins every `Λ_j` entry to this value instead of sampling.
    pub fixed_lambda: Option<f64>,
}

impl Default for Prop1Config {
    fn default() -> Self {
        Prop1Config {
            k_max: 30,
            eps_low: 0.5,
            feat_dim: 4,
            fixed_lambda: None,
        }
    }
}

/// Oscillation of each family at `k = 0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub seed: u64,
    pub product: Vec<f64>,
    pub plain: Vec<f64>,
    pub raw: Vec<f64>,
}

fn non_increasing(s: &[f64]) -> bool {
    s.windows(2).all(|w| w[1] <= w[0] + OSC_TOL)
}

impl ConvergenceTrace {
    pub const CSV_HEADER: &'static str = "experiment,seed,k,family,oscillation,contraction";

    pub fn series(&self, f: Family) -> &[f64] {
        match f {
            Family::Product => &self.product,
            Family::Plain => &self.plain,
            Family::Raw => &self.raw,
        }
    }

    /// Per-step factors `osc_k / osc_{k−1}`, `k ≥ 1`.
    pub fn contraction(&self, f: Family) -> Vec<f64> {
        self.series(f)
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }

    /// Geometric mean of the per-step factors.
    pub fn geometric_mean(&self, f: Family) -> f64 {
        let s = self.series(f);
        let k = s.len() - 1;
        if k == 0 || s[0] == 0.0 {
            return 0.0;
        }
        (s[k] / s[0]).powf(1.0 / k as f64)
    }

    pub fn non_increasing(&self, f: Family) -> bool {
        non_increasing(self.series(f))
    }

    /// Final oscillation relative to the initial one.
    pub fn decay(&self, f: Family) -> f64 {
        let s = self.series(f);
        s[s.len() - 1] / s[0]
    }

    pub fn csv_rows(&self, experiment: &str) -> Vec<String> {
        let mut out = Vec::new();
        for f in [Family::Product, Family::Plain, Family::Raw] {
            let s = self.series(f);
            let c = self.contraction(f);
            for (k, v) in s.iter().enumerate() {
                let contraction = if k == 0 { String::new() } else { format!("{:.12e}", c[k - 1]) };
                out.push(format!("{experiment},{},{k},{},{v:.12e},{contraction}", self.seed, f.name()));
            }
        }
        out
    }
}

/// Tracks oscillation of the three families from one shared random `X`
/// per seed. Seeds are processed independently and returned in input order.
pub fn prop1_experiment(graph: &Graph, cfg: &Prop1Config, seeds: &[u64], mode: ExecMode) -> Result<Vec<ConvergenceTrace>> {
    if !(cfg.eps_low > 0.0 && cfg.eps_low < 1.0) {
        return Err(Error::Domain(format!("eps_low {} outside (0,1)", cfg.eps_low)));
    }
    if cfg.k_max == 0 || cfg.feat_dim == 0 {
        return Err(Error::Range("k_max and feature width must be positive".into()));
    }
    if let Some(l) = cfg.fixed_lambda {
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::Domain(format!("fixed lambda {l} outside (0,1]")));
        }
    }
    if !graph.is_connected() {
        return Err(Error::Experiment(
            "graph is disconnected; products need not converge to a single rank-one limit".into(),
        ));
    }
    let n = graph.n();
    let rw = normalize(graph, NormKind::RandomWalk).matrix;
    let sym = normalize(graph, NormKind::Symmetric).matrix;

    let run = |&seed: &u64| -> ConvergenceTrace {
        let mut rng = rng::indexed(seed, Stream::Experiment, 0);
        let x = Mat::from_fn(n, cfg.feat_dim, |_, _| StandardNormal.sample(&mut rng));
        let (mut prod, mut plain, mut raw) = (x.clone(), x.clone(), x.clone());
        let osc0 = oscillation(&x);
        let mut trace = ConvergenceTrace {
            seed,
            product: vec![osc0],
            plain: vec![osc0],
            raw: vec![osc0],
        };
        for _ in 0..cfg.k_max {
            let lambda: Vec<f64> = (0..n)
                .map(|_| cfg.fixed_lambda.unwrap_or_else(|| rng.random_range(cfg.eps_low..1.0)))
                .collect();
            let s = row_normalized_weighted(graph, &lambda);
            prod = s.spmm(&prod, ExecMode::Serial);
            plain = rw.spmm(&plain, ExecMode::Serial);
            raw = sym.spmm(&raw, ExecMode::Serial).scale_rows(&lambda);
            trace.product.push(oscillation(&prod));
            trace.plain.push(oscillation(&plain));
            trace.raw.push(oscillation(&raw));
        }
        trace
    };
    Ok(par::map(mode, seeds, run))
}
