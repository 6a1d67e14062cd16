use crate::error::{Error, Result};
use crate::graph::{Graph, LabeledDataset};
use crate::layers::{Forward, GraphContext, Model, PsnrLayerTrace};
use crate::linalg::Mat;
use crate::rng::{self, Stream};
use crate::tensor::Tape;

/// Posterior statistics of one layer over one degree group.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub layer: usize,
    /// Degree quartile, or `None` for all nodes.
    pub group: Option<usize>,
    pub count: usize,
    pub mu_mean: f64,
    pub mu_std: f64,
    pub sigma_mean: f64,
    pub sigma_std: f64,
}

impl CoefficientRow {
    pub const CSV_HEADER: &'static str = "layer,group,count,mu_mean,mu_std,sigma_mean,sigma_std";

    pub fn to_csv(&self) -> String {
        let g = self.group.map_or_else(|| "all".to_string(), |g| g.to_string());
        format!(
            "{},{g},{},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.layer, self.count, self.mu_mean, self.mu_std, self.sigma_mean, self.sigma_std
        )
    }
}

/// Degree quartile per node. Cut points are the degrees at ranks `n/4`,
/// `n/2` and `3n/4`; nodes of equal degree always share a group, so a
/// regular graph has a single group.
pub fn degree_quartiles(graph: &Graph) -> Vec<usize> {
    let deg = graph.degrees();
    let mut sorted = deg.clone();
    sorted.sort_unstable();
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let min = sorted[0];
    let mut cuts: Vec<usize> = [n / 4, n / 2, 3 * n / 4]
        .iter()
        .map(|&r| sorted[r.min(n - 1)])
        .filter(|&c| c > min)
        .collect();
    cuts.dedup();
    deg.iter().map(|&d| cuts.iter().filter(|&&c| d >= c).count()).collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One all-node row and one row per degree quartile for every trace.
pub fn coefficient_table(traces: &[PsnrLayerTrace], graph: &Graph) -> Vec<CoefficientRow> {
    let groups = degree_quartiles(graph);
    let group_count = groups.iter().max().map_or(0, |g| g + 1);
    let mut rows = Vec::new();
    for t in traces {
        let mut push = |group: Option<usize>, idx: Vec<usize>| {
            if idx.is_empty() {
                return;
            }
            let mu: Vec<f64> = idx.iter().map(|&i| t.mu[i]).collect();
            let sigma: Vec<f64> = idx.iter().map(|&i| t.sigma[i]).collect();
            let (mu_mean, mu_std) = mean_std(&mu);
            let (sigma_mean, sigma_std) = mean_std(&sigma);
            rows.push(CoefficientRow {
                layer: t.layer,
                group,
                count: idx.len(),
                mu_mean,
                mu_std,
                sigma_mean,
                sigma_std,
            });
        };
        push(None, (0..t.mu.len()).collect());
        for g in 0..group_count {
            push(Some(g), (0..groups.len()).filter(|&i| groups[i] == g).collect());
        }
    }
    rows
}

/// Evaluates a PSNR model once under the first evaluation draw and tabulates
/// its posterior.
pub fn log_coefficients(model: &Model, data: &LabeledDataset, features: &Mat, seed: u64) -> Result<Vec<CoefficientRow>> {
    if !model.is_psnr() {
        return Err(Error::Contract("coefficient logging needs a PSNR model".into()));
    }
    let ctx = GraphContext::new(&data.graph);
    let mut tape = Tape::new();
    let noise = crate::layers::Noise::Sampled(rng::indexed(seed, Stream::Eval, 0));
    let out = model.forward(&mut tape, &ctx, features, &mut Forward::eval(noise))?;
    Ok(coefficient_table(&out.traces, &data.graph))
}

/// Average ranks, 1-based; ties share the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Spearman correlation between layer index and all-node mean μ.
pub fn coefficient_trend(rows: &[CoefficientRow]) -> Option<f64> {
    let (layers, mus): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.group.is_none())
        .map(|r| (r.layer as f64, r.mu_mean))
        .unzip();
    spearman(&layers, &mus)
}
