//! Randomised equivalence suite: closed forms against the iterative
//! recursions, and the two invertibility lemmas.

use rand::Rng;

use super::{
    appnp_shift_form, check_lemma1, check_lemma2, closed_appnp, closed_psnr, closed_resgcn,
    iterate_linear, LinearDynamic, LinearKind,
};
use crate::error::Result;
use crate::graph::{normalize, Graph, NormKind};
use crate::linalg::Mat;
use crate::par::{self, ExecMode};
use crate::rng::{self, Stream};

/// Closed form versus recursion, relative Frobenius.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// Independent dense-power route for ResGCN.
pub const POWER_ROUTE_TOL: f64 = 1e-9;
/// Relative residual of the lemma LU solves.
pub const LEMMA_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Node counts are drawn from `2..=n_max`.
    pub n_max: usize,
    /// Orders are drawn from `1..=k_max`.
    pub k_max: usize,
    /// Feature widths are drawn from `1..=d_max`.
    pub d_max: usize,
    pub instances: usize,
    pub lemma_draws: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_max: 12,
            k_max: 8,
            d_max: 4,
            instances: 50,
            lemma_draws: 200,
            seed: 0,
        }
    }
}

/// One random oracle instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    pub n_op: Mat,
    pub h: Mat,
    pub alpha: f64,
    pub lambdas: Vec<Vec<f64>>,
    pub k: usize,
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::build(&edges, n).expect("endpoints are in range")
}

/// Rejection-samples `random_graph` until the result is connected. The
/// first draw comes from `Stream::Experiment` of `seed`.
pub fn random_connected_graph(seed: u64, n: usize, p: f64) -> crate::Result<Graph> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(crate::Error::Domain(format!("edge probability {p} outside (0,1]")));
    }
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Experiment);
    loop {
        let g = random_graph(&mut rng, n, p);
        if g.is_connected() {
            return Ok(g);
        }
    }
}

pub fn random_lambdas(rng: &mut impl Rng, n: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(0.01..0.99)).collect())
        .collect()
}

pub fn random_instance(seed: u64, index: u64, cfg: &VerifyConfig) -> Instance {
    let mut rng = rng::indexed(seed, Stream::Oracle, index);
    let n = rng.random_range(2..=cfg.n_max.max(2));
    let d = rng.random_range(1..=cfg.d_max.max(1));
    let k = rng.random_range(1..=cfg.k_max.max(1));
    let p = rng.random_range(0.15..0.6);
    let graph = random_graph(&mut rng, n, p);
    let n_op = normalize(&graph, NormKind::Symmetric).matrix.to_dense();
    let h = Mat::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let alpha = rng.random_range(0.05..0.95);
    let lambdas = random_lambdas(&mut rng, n, k.saturating_sub(1));
    Instance {
        graph,
        n_op,
        h,
        alpha,
        lambdas,
        k,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub suite: &'static str,
    pub instance: usize,
    pub n: usize,
    pub k: usize,
    pub value: f64,
    pub threshold: f64,
}

impl VerifyRow {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.threshold
    }

    pub const CSV_HEADER: &'static str = "suite,instance,n,k,value,threshold,pass";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{}",
            self.suite,
            self.instance,
            self.n,
            self.k,
            self.value,
            self.threshold,
            self.passed()
        )
    }
}

fn gap(a: Result<Mat>, b: &Mat) -> f64 {
    a.map(|a| a.rel_frobenius(b)).unwrap_or(f64::INFINITY)
}

fn closed_form_rows(idx: usize, inst: &Instance) -> Vec<VerifyRow> {
    let n = inst.h.rows();
    let k = inst.k;
    let row = |suite, value, threshold| VerifyRow {
        suite,
        instance: idx,
        n,
        k,
        value,
        threshold,
    };
    let dynamic = |kind| LinearDynamic {
        kind,
        n: inst.n_op.clone(),
        h: inst.h.clone(),
        k,
    };
    let mut rows = Vec::with_capacity(5);

    match iterate_linear(&dynamic(LinearKind::ResGcn)) {
        Ok(it) => {
            rows.push(row("resgcn", gap(closed_resgcn(&inst.n_op, &inst.h, k), &it), CLOSED_FORM_TOL));
            let step = Mat::identity(n).add(&inst.n_op);
            let mut pow = inst.h.clone();
            for _ in 0..k {
                pow = step.matmul(&pow).expect("square");
            }
            rows.push(row(
                "resgcn-power",
                gap(closed_resgcn(&inst.n_op, &inst.h, k), &pow),
                POWER_ROUTE_TOL,
            ));
        }
        Err(_) => rows.push(row("resgcn", f64::INFINITY, CLOSED_FORM_TOL)),
    }
    let appnp = iterate_linear(&dynamic(LinearKind::Appnp { alpha: inst.alpha }));
    match appnp {
        Ok(it) => {
            rows.push(row(
                "appnp",
                gap(closed_appnp(&inst.n_op, &inst.h, inst.alpha, k), &it),
                CLOSED_FORM_TOL,
            ));
            rows.push(row(
                "appnp-shift",
                gap(appnp_shift_form(&inst.n_op, &inst.h, inst.alpha, k), &it),
                CLOSED_FORM_TOL,
            ));
        }
        Err(_) => rows.push(row("appnp", f64::INFINITY, CLOSED_FORM_TOL)),
    }
    let psnr = iterate_linear(&dynamic(LinearKind::Psnr {
        lambdas: inst.lambdas.clone(),
    }));
    let value = match psnr {
        Ok(it) => gap(closed_psnr(&inst.n_op, &inst.h, &inst.lambdas), &it),
        Err(_) => f64::INFINITY,
    };
    rows.push(row("psnr", value, CLOSED_FORM_TOL));
    rows
}

fn lemma_rows(idx: usize, seed: u64, cfg: &VerifyConfig) -> Vec<VerifyRow> {
    let mut rng = rng::indexed(seed ^ 0x4c45_4d4d, Stream::Oracle, idx as u64);
    let n = rng.random_range(2..=20usize.max(cfg.n_max));
    let p = rng.random_range(0.1..0.7);
    let g = random_graph(&mut rng, n, p);
    let n_op = normalize(&g, NormKind::Symmetric).matrix.to_dense();
    let alpha = rng.random_range(0.01..0.99);
    let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
    let value = |r: Result<super::ConditionReport>| match r {
        Ok(rep) if rep.passed() => rep.residual,
        _ => f64::INFINITY,
    };
    vec![
        VerifyRow {
            suite: "lemma1",
            instance: idx,
            n,
            k: 0,
            value: value(check_lemma1(&n_op, alpha)),
            threshold: LEMMA_RESIDUAL_TOL,
        },
        VerifyRow {
            suite: "lemma2",
            instance: idx,
            n,
            k: 0,
            value: value(check_lemma2(&n_op, &lambda)),
            threshold: LEMMA_RESIDUAL_TOL,
        },
    ]
}

/// Runs every closed-form and lemma check. Rows come back in a fixed order
/// regardless of `mode`.
pub fn run_suite(cfg: &VerifyConfig, mode: ExecMode) -> Vec<VerifyRow> {
    let closed = par::map_range(mode, cfg.instances, |i| {
        closed_form_rows(i, &random_instance(cfg.seed, i as u64, cfg))
    });
    let lemmas = par::map_range(mode, cfg.lemma_draws, |i| lemma_rows(i, cfg.seed, cfg));
    closed.into_iter().chain(lemmas).flatten().collect()
}
