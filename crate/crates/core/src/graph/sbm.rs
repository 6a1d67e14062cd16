use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{FeatureMatrix, Graph, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{self, Stream};

/// Parameters of the planted-partition generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub blocks: usize,
    pub per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub feat_shift: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            blocks: 2,
            per_block: 200,
            p_in: 0.05,
            p_out: 0.005,
            feat_dim: 16,
            feat_shift: 1.0,
            seed: 0,
        }
    }
}

/// Samples a stochastic block model. Block index is the class label; each
/// node's features are standard normal plus `feat_shift` on axis
/// `class % feat_dim`.
pub fn gen_sbm(p: &SbmParams) -> Result<LabeledDataset> {
    let valid = |x: f64| (0.0..=1.0).contains(&x);
    if !valid(p.p_in) || !valid(p.p_out) || p.p_out > p.p_in {
        return Err(Error::Config(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={}, p_out={}",
            p.p_in, p.p_out
        )));
    }
    if p.blocks == 0 || p.per_block == 0 || p.feat_dim == 0 {
        return Err(Error::Config(
            "blocks, per_block and feat_dim must be positive".into(),
        ));
    }
    let n = p.blocks * p.per_block;
    let labels: Vec<usize> = (0..n).map(|i| i / p.per_block).collect();

    let mut rng = rng::stream(p.seed, Stream::Sbm);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if labels[i] == labels[j] { p.p_in } else { p.p_out };
            if rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::build(&edges, n)?;

    let mut feats = Mat::zeros(n, p.feat_dim);
    for i in 0..n {
        for v in feats.row_mut(i) {
            *v = StandardNormal.sample(&mut rng);
        }
        feats[(i, labels[i] % p.feat_dim)] += p.feat_shift;
    }
    LabeledDataset::new(graph, FeatureMatrix::new(feats)?, labels, p.blocks)
}
