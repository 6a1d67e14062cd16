use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitPolicy {
    /// Fixed node counts drawn from every class.
    PerClass { train: usize, val: usize, test: usize },
    /// Fractions of all nodes.
    Fractional { train: f64, val: f64, test: f64 },
}

impl SplitPolicy {
    /// Parses `per-class:20,30,50` or `fractional:0.6,0.2,0.2`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("split policy `{s}`: expected per-class:A,B,C or fractional:A,B,C"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        match kind.trim() {
            "per-class" => {
                let v: Vec<usize> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                Ok(SplitPolicy::PerClass { train: v[0], val: v[1], test: v[2] })
            }
            "fractional" => {
                let v: Vec<f64> = parts
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                Ok(SplitPolicy::Fractional { train: v[0], val: v[1], test: v[2] })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitPolicy::PerClass { train, val, test } => write!(f, "per-class:{train},{val},{test}"),
            SplitPolicy::Fractional { train, val, test } => write!(f, "fractional:{train},{val},{test}"),
        }
    }
}

/// Disjoint train / validation / test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub n: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub policy: SplitPolicy,
    pub missing_features: bool,
}

impl Split {
    pub fn mask(&self, idx: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.n];
        idx.iter().for_each(|&i| m[i] = true);
        m
    }
}

pub fn make_split(labels: &[usize], classes: usize, policy: SplitPolicy, seed: u64, missing_features: bool) -> Result<Split> {
    let n = labels.len();
    let mut rng = rng::stream(seed, Stream::Split);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    match policy {
        SplitPolicy::PerClass { train: a, val: b, test: c } => {
            if a == 0 {
                return Err(Error::Split("per-class training count must be positive".into()));
            }
            for class in 0..classes {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if members.len() < a + b + c {
                    return Err(Error::Split(format!(
                        "class {class} has {} nodes, needs {}",
                        members.len(),
                        a + b + c
                    )));
                }
                members.shuffle(&mut rng);
                train.extend_from_slice(&members[..a]);
                val.extend_from_slice(&members[a..a + b]);
                test.extend_from_slice(&members[a + b..a + b + c]);
            }
        }
        SplitPolicy::Fractional { train: a, val: b, test: c } => {
            let ok = |f: f64| (0.0..=1.0).contains(&f);
            if !(ok(a) && ok(b) && ok(c)) || a + b + c > 1.0 + 1e-9 {
                return Err(Error::Split(format!("fractions {a}, {b}, {c} must be in [0,1] and sum to at most 1")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let nt = (a * n as f64).round() as usize;
            let nv = ((b * n as f64).round() as usize).min(n - nt);
            let ns = ((c * n as f64).round() as usize).min(n - nt - nv);
            train.extend_from_slice(&order[..nt]);
            val.extend_from_slice(&order[nt..nt + nv]);
            test.extend_from_slice(&order[nt + nv..nt + nv + ns]);
        }
    }
    if train.is_empty() {
        return Err(Error::Split("training set is empty".into()));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        n,
        train,
        val,
        test,
        policy,
        missing_features,
    })
}

/// Zeroes the feature rows of validation and test nodes.
pub fn apply_missing_features(features: &Mat, split: &Split) -> Result<Mat> {
    if !split.missing_features {
        return Err(Error::Contract("split is not marked for missing features".into()));
    }
    if features.rows() != split.n {
        return Err(Error::shape("missing-features", format!("{} rows for {} nodes", features.rows(), split.n)));
    }
    let mut out = features.clone();
    for &i in split.val.iter().chain(&split.test) {
        out.row_mut(i).fill(0.0);
    }
    Ok(out)
}
