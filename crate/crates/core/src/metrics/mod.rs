//! Smoothness and convergence measurements.

mod prop1;

pub use prop1::{prop1_experiment, ConvergenceTrace, Family, Prop1Config, OSC_TOL};

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// `½ ‖x/‖x‖ − y/‖y‖‖`, in `[0, 1]`.
pub fn pair_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pair-distance", format!("{} vs {}", x.len(), y.len())));
    }
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Undefined("distance to a zero vector".into()));
    }
    let sq: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a / nx - b / ny).powi(2))
        .sum();
    Ok(0.5 * sq.sqrt())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// SMV over `subset` together with the number of zero rows that were left
/// out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smv {
    pub value: f64,
    pub skipped: usize,
}

/// Mean pairwise normalized distance between the rows in `subset`. Zero rows
/// are skipped with a warning.
pub fn smv(x: &Mat, subset: &[usize]) -> Result<f64> {
    smv_detailed(x, subset).map(|s| s.value)
}

pub fn smv_detailed(x: &Mat, subset: &[usize]) -> Result<Smv> {
    if subset.len() < 2 {
        return Err(Error::Undefined(format!("SMV needs two rows, got {}", subset.len())));
    }
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(subset.len());
    let mut skipped = 0;
    for &i in subset {
        if i >= x.rows() {
            return Err(Error::shape("smv", format!("row {i} of {}", x.rows())));
        }
        let row = x.row(i);
        let n = norm(row);
        if n == 0.0 {
            skipped += 1;
            continue;
        }
        units.push(row.iter().map(|v| v / n).collect());
    }
    if skipped > 0 {
        warn!("SMV skipped {skipped} zero rows");
    }
    let m = units.len();
    if m < 2 {
        return Err(Error::Undefined(format!("SMV has {m} nonzero rows")));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let sq: f64 = units[i].iter().zip(&units[j]).map(|(a, b)| (a - b).powi(2)).sum();
            total += 0.5 * sq.sqrt();
        }
    }
    Ok(Smv {
        value: 2.0 * total / (m * (m - 1)) as f64,
        skipped,
    })
}

/// SMV of one node group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSmv {
    pub group: i32,
    pub size: usize,
    pub value: f64,
}

/// One SMV per group with at least two nonzero rows, in ascending group
/// order.
pub fn group_smv(x: &Mat, groups: &[i32]) -> Result<Vec<GroupSmv>> {
    if groups.len() != x.rows() {
        return Err(Error::shape("group-smv", format!("{} labels for {} rows", groups.len(), x.rows())));
    }
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut out = Vec::new();
    for (group, idx) in members {
        match smv(x, &idx) {
            Ok(value) => out.push(GroupSmv {
                group,
                size: idx.len(),
                value,
            }),
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Per-layer, per-group SMV values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoothnessReport {
    pub rows: Vec<SmoothnessRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessRow {
    pub layer: usize,
    /// `None` for the whole node set.
    pub group: Option<i32>,
    pub size: usize,
    pub smv: f64,
}

impl SmoothnessReport {
    pub const CSV_HEADER: &'static str = "layer,group,size,smv";

    /// Adds the all-node SMV and every group SMV of one layer.
    pub fn push_layer(&mut self, layer: usize, x: &Mat, groups: &[i32]) -> Result<()> {
        let all: Vec<usize> = (0..x.rows()).collect();
        match smv(x, &all) {
            Ok(v) => self.rows.push(SmoothnessRow {
                layer,
                group: None,
                size: all.len(),
                smv: v,
            }),
            Err(Error::Undefined(_)) => {}
            Err(e) => return Err(e),
        }
        for g in group_smv(x, groups)? {
            self.rows.push(SmoothnessRow {
                layer,
                group: Some(g.group),
                size: g.size,
                smv: g.value,
            });
        }
        Ok(())
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let g = r.group.map_or_else(|| "all".to_string(), |g| g.to_string());
                format!("{},{},{},{:.12}", r.layer, g, r.size, r.smv)
            })
            .collect()
    }
}

/// `max_j (max_i X_ij − min_i X_ij)`.
pub fn oscillation(x: &Mat) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..x.cols() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..x.rows() {
            lo = lo.min(x[(i, j)]);
            hi = hi.max(x[(i, j)]);
        }
        if x.rows() > 0 {
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Row argmax; ties go to the lower class index.
pub fn argmax_rows(logits: &Mat) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `mask` nodes whose argmax logit equals the label.
pub fn classification_accuracy(logits: &Mat, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Undefined("accuracy over an empty mask".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::shape("accuracy", format!("{} labels for {} rows", labels.len(), logits.rows())));
    }
    let pred = argmax_rows(logits);
    let hits = mask.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(hits as f64 / mask.len() as f64)
}
