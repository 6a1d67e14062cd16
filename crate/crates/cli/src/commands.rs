use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::info;
use smoothlab::graph::io::{load_dataset_dir, write_dataset};
use smoothlab::graph::{gen_sbm, LabeledDataset, SbmParams};
use smoothlab::harness::config::{parse_list, parse_sbm_shape};
use smoothlab::harness::{
    apply_missing_features, cell_config, coefficient_trend, depth_sweep, log_coefficients, make_split,
    smooth_study, summarize, train_with_model, CoefficientRow, ExperimentConfig, SweepSpec, TrainReport,
    SMOOTH_HEADER, SWEEP_HEADER, SWEEP_SUMMARY_HEADER,
};
use smoothlab::layers::ResidualKind;
use smoothlab::linalg::Mat;
use smoothlab::metrics::{prop1_experiment, ConvergenceTrace, Family, Prop1Config};
use smoothlab::metrics::SmoothnessReport;
use smoothlab::oracles::verify::{random_connected_graph, run_suite, VerifyConfig, VerifyRow};
use smoothlab::par::{self, ExecMode};

use crate::{Command, ConvergeArgs, Failure, GenArgs, RunArgs, SbmArgs, VerifyArgs};

type Outcome = Result<bool, Failure>;

/// Runs one subcommand; `Ok(false)` means a gated check failed.
pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Verify(a) => verify(&a),
        Command::Train(a) => train(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Smooth(a) => smooth(&a),
        Command::Converge(a) => converge(&a),
        Command::Coeffs(a) => coeffs(&a),
        Command::Gen(a) => gen(&a),
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn verify(a: &VerifyArgs) -> Outcome {
    if a.n < 2 || a.k == 0 || a.d == 0 {
        return Err(usage("--n must be at least 2 and --k, --d positive"));
    }
    let cfg = VerifyConfig {
        n_max: a.n,
        k_max: a.k,
        d_max: a.d,
        instances: a.instances,
        lemma_draws: a.lemma_draws,
        seed: a.common.seed,
    };
    let rows = par::with_workers(a.common.workers, |mode| run_suite(&cfg, mode));
    let csv: Vec<String> = rows.iter().map(VerifyRow::to_csv).collect();
    write_csv(&a.common.out, "verify.csv", VerifyRow::CSV_HEADER, &csv)?;

    let mut suites: Vec<&str> = Vec::new();
    for r in &rows {
        if !suites.contains(&r.suite) {
            suites.push(r.suite);
        }
    }
    for s in suites {
        let of: Vec<&VerifyRow> = rows.iter().filter(|r| r.suite == s).collect();
        let worst = of.iter().map(|r| r.value).fold(0.0, f64::max);
        let passed = of.iter().filter(|r| r.passed()).count();
        println!("{s}: {passed}/{} passed, max {worst:e}", of.len());
    }
    Ok(rows.iter().all(VerifyRow::passed))
}

fn apply_sbm(cfg: &mut ExperimentConfig, s: &SbmArgs) -> Result<(), Failure> {
    let pairs = [
        ("sbm", s.sbm.clone()),
        ("p_in", s.p_in.map(|v| v.to_string())),
        ("p_out", s.p_out.map(|v| v.to_string())),
        ("feat_dim", s.feat_dim.map(|v| v.to_string())),
        ("feat_shift", s.feat_shift.map(|v| v.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(usage)?;
        }
    }
    Ok(())
}

/// Experiment config from `--config` (or defaults) with flag overrides.
fn experiment(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    apply_sbm(&mut cfg, &a.sbm)?;
    let pairs = [
        ("dataset", a.dataset.as_ref().map(|p| p.display().to_string())),
        ("depths", a.depths.clone()),
        ("seeds", a.seeds.clone()),
        ("residual", a.residual.clone()),
        ("alpha", a.alpha.map(|v| v.to_string())),
        ("encoder", a.encoder.clone()),
        ("backbone", a.backbone.clone()),
        ("split.policy", a.split.clone()),
        ("hyper.eval_draws", a.eval_draws.map(|v| v.to_string())),
        ("hyper.lr", a.lr.clone()),
        ("hyper.hidden", a.hidden.map(|v| v.to_string())),
        ("hyper.max_epochs", a.epochs.map(|v| v.to_string())),
        ("hyper.patience", a.patience.map(|v| v.to_string())),
        ("hyper.dropout", a.dropout.map(|v| v.to_string())),
        ("hyper.weight_decay", a.weight_decay.map(|v| v.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(usage)?;
        }
    }
    if a.missing {
        cfg.missing = true;
    }
    cfg.hyper.validate().map_err(usage)?;
    if cfg.depths.is_empty() || cfg.seeds.is_empty() || cfg.residuals.is_empty() {
        return Err(usage("depths, seeds and residual kinds must be nonempty"));
    }
    Ok(cfg)
}

fn load(cfg: &ExperimentConfig, seed: u64) -> Result<(LabeledDataset, SweepSpec), Failure> {
    let data = cfg.data.load(seed)?;
    let spec = cfg.sweep_spec(data.classes).map_err(usage)?;
    info!("dataset: {} nodes, {} classes", data.n(), data.classes);
    Ok((data, spec))
}

fn input_features(data: &LabeledDataset, split: &smoothlab::harness::Split) -> smoothlab::Result<Mat> {
    if split.missing_features {
        apply_missing_features(data.features.values(), split)
    } else {
        Ok(data.features.values().clone())
    }
}

struct Trained {
    kind: ResidualKind,
    depth: usize,
    report: TrainReport,
    coefficients: Vec<CoefficientRow>,
}

/// Trains every (kind, depth) cell of `spec` on the split of `seed`.
fn train_cells(spec: &SweepSpec, data: &LabeledDataset, seed: u64, mode: ExecMode, log_coeffs: bool) -> Result<Vec<Trained>, Failure> {
    let split = make_split(&data.labels, data.classes, spec.policy, seed, spec.missing)?;
    let features = input_features(data, &split)?;
    let cells: Vec<(ResidualKind, usize)> = spec
        .kinds
        .iter()
        .flat_map(|&k| spec.depths.iter().map(move |&d| (k, d)))
        .collect();
    let results = par::map(mode, &cells, |&(kind, depth)| -> smoothlab::Result<Trained> {
        let config = cell_config(spec, data, kind, depth, seed);
        let (report, model) = train_with_model(&config, data, &split, &spec.hyper, seed)?;
        let coefficients = if log_coeffs {
            log_coefficients(&model, data, &features, seed)?
        } else {
            Vec::new()
        };
        Ok(Trained { kind, depth, report, coefficients })
    });
    results
        .into_iter()
        .zip(&cells)
        .map(|(r, (kind, depth))| r.with_context(|| format!("{} at depth {depth}", kind.name())).map_err(Failure::from))
        .collect()
}

fn prefixed(t: &Trained, rows: Vec<String>) -> impl Iterator<Item = String> + '_ {
    rows.into_iter().map(move |r| format!("{},{},{r}", t.kind.name(), t.depth))
}

fn train(a: &RunArgs) -> Outcome {
    let cfg = experiment(a)?;
    let seed = a.common.seed;
    let (data, spec) = load(&cfg, seed)?;
    let trained = par::with_workers(a.common.workers, |mode| train_cells(&spec, &data, seed, mode, false))?;

    let out = &a.common.out;
    let mut summary = Vec::new();
    let mut epochs = Vec::new();
    let mut smv = Vec::new();
    let mut coeffs = Vec::new();
    for t in &trained {
        summary.extend(prefixed(t, vec![t.report.summary_row()]));
        epochs.extend(prefixed(t, t.report.epoch_rows()));
        smv.extend(prefixed(t, t.report.smv.csv_rows()));
        coeffs.extend(prefixed(t, t.report.coefficients.iter().map(CoefficientRow::to_csv).collect()));
        println!(
            "{} depth {}: lr {} best epoch {} val {:.4} test {:.4}",
            t.kind.name(),
            t.depth,
            t.report.lr,
            t.report.best_epoch,
            t.report.best_val,
            t.report.test_acc
        );
    }
    let head = |h: &str| format!("residual,depth,{h}");
    write_csv(out, "train_summary.csv", &head(TrainReport::SUMMARY_HEADER), &summary)?;
    write_csv(out, "train_epochs.csv", &head(TrainReport::EPOCH_HEADER), &epochs)?;
    write_csv(out, "train_smv.csv", &head(SmoothnessReport::CSV_HEADER), &smv)?;
    if !coeffs.is_empty() {
        write_csv(out, "coefficients.csv", &head(CoefficientRow::CSV_HEADER), &coeffs)?;
    }
    Ok(true)
}

fn sweep(a: &RunArgs) -> Outcome {
    let cfg = experiment(a)?;
    let (data, spec) = load(&cfg, a.common.seed)?;
    let rows = par::with_workers(a.common.workers, |mode| depth_sweep(&spec, &data, mode));
    let csv: Vec<String> = rows.iter().map(|r| r.to_csv()).collect();
    write_csv(&a.common.out, "sweep.csv", SWEEP_HEADER, &csv)?;
    let summary = summarize(&rows);
    write_csv(&a.common.out, "sweep_summary.csv", SWEEP_SUMMARY_HEADER, &summary)?;
    for line in &summary {
        println!("{line}");
    }
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep cells failed; see the error column", rows.len());
    }
    Ok(failed == 0)
}

fn smooth(a: &RunArgs) -> Outcome {
    let cfg = experiment(a)?;
    let grid: Vec<usize> = match &a.layers_grid {
        Some(g) => parse_list(g).map_err(usage)?,
        None => cfg.depths.clone(),
    };
    if grid.is_empty() {
        return Err(usage("--layers-grid must be nonempty"));
    }
    let seed = a.common.seed;
    let (data, spec) = load(&cfg, seed)?;
    let rows = par::with_workers(a.common.workers, |mode| smooth_study(&spec, &data, &grid, seed, mode))?;
    write_csv(&a.common.out, "smooth.csv", SMOOTH_HEADER, &rows)?;
    Ok(true)
}

fn coeffs(a: &RunArgs) -> Outcome {
    let mut cfg = experiment(a)?;
    if a.residual.is_none() && a.config.is_none() {
        cfg.residuals = vec!["psnr".into()];
    }
    let seed = a.common.seed;
    let (data, spec) = load(&cfg, seed)?;
    let trained = par::with_workers(a.common.workers, |mode| train_cells(&spec, &data, seed, mode, true))?;
    let mut rows = Vec::new();
    let mut trend = Vec::new();
    for t in &trained {
        rows.extend(prefixed(t, t.coefficients.iter().map(CoefficientRow::to_csv).collect()));
        let rho = coefficient_trend(&t.coefficients).map_or_else(String::new, |r| format!("{r:.6}"));
        println!("{} depth {}: spearman(layer, mean mu) = {rho}", t.kind.name(), t.depth);
        trend.extend(prefixed(t, vec![rho]));
    }
    let out = &a.common.out;
    write_csv(out, "coefficients.csv", &format!("residual,depth,{}", CoefficientRow::CSV_HEADER), &rows)?;
    write_csv(out, "coefficient_trend.csv", "residual,depth,spearman", &trend)?;
    Ok(true)
}

fn converge(a: &ConvergeArgs) -> Outcome {
    let seeds: Vec<u64> = parse_list(&a.seeds).map_err(usage)?;
    if seeds.is_empty() {
        return Err(usage("--seeds must be nonempty"));
    }
    let graph = match &a.dataset {
        Some(dir) => load_dataset_dir(dir)?.graph,
        None => random_connected_graph(a.common.seed, a.n, a.p).map_err(usage)?,
    };
    let cfg = Prop1Config {
        k_max: a.k_max,
        eps_low: a.eps_low,
        feat_dim: a.feat_dim,
        fixed_lambda: None,
    };
    let traces = par::with_workers(a.common.workers, |mode| prop1_experiment(&graph, &cfg, &seeds, mode))?;

    let rows: Vec<String> = traces.iter().flat_map(|t| t.csv_rows("converge")).collect();
    write_csv(&a.common.out, "converge.csv", ConvergenceTrace::CSV_HEADER, &rows)?;
    let mut summary = Vec::new();
    let mut ok = true;
    for t in &traces {
        for f in [Family::Product, Family::Plain, Family::Raw] {
            let monotone = t.non_increasing(f);
            if f != Family::Raw {
                ok &= monotone;
            }
            summary.push(format!(
                "{},{},{:.12},{:.12e},{monotone}",
                t.seed,
                f.name(),
                t.geometric_mean(f),
                t.decay(f)
            ));
        }
    }
    write_csv(
        &a.common.out,
        "converge_summary.csv",
        "seed,family,geometric_mean,decay,non_increasing",
        &summary,
    )?;
    Ok(ok)
}

fn gen(a: &GenArgs) -> Outcome {
    let mut p = SbmParams {
        seed: a.common.seed,
        ..SbmParams::default()
    };
    if let Some(s) = &a.sbm.sbm {
        (p.blocks, p.per_block) = parse_sbm_shape(s).map_err(usage)?;
    }
    p.p_in = a.sbm.p_in.unwrap_or(p.p_in);
    p.p_out = a.sbm.p_out.unwrap_or(p.p_out);
    p.feat_dim = a.sbm.feat_dim.unwrap_or(p.feat_dim);
    p.feat_shift = a.sbm.feat_shift.unwrap_or(p.feat_shift);
    let data = gen_sbm(&p).map_err(usage)?;
    write_dataset(&a.common.out, &data)?;
    println!(
        "wrote {} nodes, {} edges, {} classes to {}",
        data.n(),
        data.graph.edges().len(),
        data.classes,
        a.common.out.display()
    );
    Ok(true)
}
