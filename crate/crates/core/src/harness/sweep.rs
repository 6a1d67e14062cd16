use std::collections::BTreeMap;

use log::warn;

use super::split::{make_split, SplitPolicy};
use super::train::{train, Hyper, TrainReport};
use crate::error::Result;
use crate::graph::LabeledDataset;
use crate::layers::{ModelConfig, ResidualKind};
use crate::par::{self, ExecMode};

/// Depth sweep over residual kinds and seeds. Seed `s` fixes the split, the
/// initialization and all training noise of its cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ModelConfig,
    pub kinds: Vec<ResidualKind>,
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub policy: SplitPolicy,
    pub missing: bool,
    pub hyper: Hyper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lr: f64,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub final_smv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub residual: ResidualKind,
    pub depth: usize,
    pub seed: u64,
    pub outcome: std::result::Result<SweepCell, String>,
}

pub const SWEEP_HEADER: &str = "residual,depth,seed,lr,best_epoch,val_acc,test_acc,final_smv,error";
pub const SWEEP_SUMMARY_HEADER: &str = "residual,depth,runs,mean_test_acc,std_test_acc,mean_final_smv";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let head = format!("{},{},{}", self.residual.name(), self.depth, self.seed);
        match &self.outcome {
            Ok(c) => format!(
                "{head},{},{},{:.6},{:.6},{},",
                c.lr,
                c.best_epoch,
                c.val_acc,
                c.test_acc,
                c.final_smv.map_or_else(String::new, |v| format!("{v:.6}"))
            ),
            Err(e) => format!("{head},,,,,,\"{}\"", e.replace('"', "'")),
        }
    }
}

/// Model config of one sweep cell.
pub fn cell_config(spec: &SweepSpec, data: &LabeledDataset, kind: ResidualKind, depth: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        depth,
        residual: kind,
        seed,
        classes: data.classes,
        ..spec.hyper.apply(&spec.base)
    }
}

fn run_cell(spec: &SweepSpec, data: &LabeledDataset, kind: ResidualKind, depth: usize, seed: u64) -> Result<TrainReport> {
    let split = make_split(&data.labels, data.classes, spec.policy, seed, spec.missing)?;
    train(&cell_config(spec, data, kind, depth, seed), data, &split, &spec.hyper, seed)
}

/// Runs every (kind, depth, seed) cell. Failures are recorded in the row
/// instead of aborting; rows come back in kind, depth, seed order whatever
/// the execution mode.
pub fn depth_sweep(spec: &SweepSpec, data: &LabeledDataset, mode: ExecMode) -> Vec<SweepRow> {
    let mut cells = Vec::new();
    for &kind in &spec.kinds {
        for &depth in &spec.depths {
            for &seed in &spec.seeds {
                cells.push((kind, depth, seed));
            }
        }
    }
    par::map(mode, &cells, |&(kind, depth, seed)| {
        let outcome = run_cell(spec, data, kind, depth, seed)
            .map(|r| SweepCell {
                lr: r.lr,
                best_epoch: r.best_epoch,
                val_acc: r.best_val,
                test_acc: r.test_acc,
                final_smv: r.final_smv(),
            })
            .map_err(|e| {
                warn!("{} depth {depth} seed {seed}: {e}", kind.name());
                e.to_string()
            });
        SweepRow {
            residual: kind,
            depth,
            seed,
            outcome,
        }
    })
}

/// Mean and population standard deviation of test accuracy per
/// (kind, depth), over the successful cells.
pub fn summarize(rows: &[SweepRow]) -> Vec<String> {
    let mut groups: BTreeMap<(usize, usize), (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut kind_order: Vec<&'static str> = Vec::new();
    for r in rows {
        let name = r.residual.name();
        let k = match kind_order.iter().position(|&n| n == name) {
            Some(k) => k,
            None => {
                kind_order.push(name);
                kind_order.len() - 1
            }
        };
        let entry = groups
            .entry((k, r.depth))
            .or_insert_with(|| (name.to_string(), Vec::new(), Vec::new()));
        if let Ok(c) = &r.outcome {
            entry.1.push(c.test_acc);
            if let Some(s) = c.final_smv {
                entry.2.push(s);
            }
        }
    }
    groups
        .into_iter()
        .map(|((_, depth), (name, acc, smv))| {
            let n = acc.len();
            if n == 0 {
                return format!("{name},{depth},0,,,");
            }
            let mean = acc.iter().sum::<f64>() / n as f64;
            let sd = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let smv_mean = if smv.is_empty() {
                String::new()
            } else {
                format!("{:.6}", smv.iter().sum::<f64>() / smv.len() as f64)
            };
            format!("{name},{depth},{n},{mean:.6},{sd:.6},{smv_mean}")
        })
        .collect()
}

pub const SMOOTH_HEADER: &str = "depth,layer,group,size,smv,test_acc";

/// Trains one model per depth in `grid` and reports the SMV of every layer,
/// over all nodes and per degree group.
pub fn smooth_study(spec: &SweepSpec, data: &LabeledDataset, grid: &[usize], seed: u64, mode: ExecMode) -> Result<Vec<String>> {
    let kind = spec.kinds.first().copied().unwrap_or(ResidualKind::None);
    let reports = par::map(mode, grid, |&depth| run_cell(spec, data, kind, depth, seed));
    let mut out = Vec::new();
    for (&depth, report) in grid.iter().zip(reports) {
        let report = report?;
        for line in report.smv.csv_rows() {
            out.push(format!("{depth},{line},{:.6}", report.test_acc));
        }
    }
    Ok(out)
}
