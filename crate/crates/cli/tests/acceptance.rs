//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;
use smoothlab::graph::{gen_sbm, normalize, Graph, NormKind, SbmParams};
use smoothlab::harness::{depth_sweep, Hyper, SplitPolicy, SweepRow, SweepSpec};
use smoothlab::layers::{
    build_model, cross_entropy, Backbone, EncoderKind, Forward, GraphContext, ModelConfig, Noise, ResidualKind,
};
use smoothlab::linalg::Mat;
use smoothlab::metrics::{prop1_experiment, smv, Family, Prop1Config};
use smoothlab::oracles::verify::{random_connected_graph, run_suite, VerifyConfig};
use smoothlab::oracles::{iterate_linear, LinearDynamic, LinearKind};
use smoothlab::par::ExecMode;
use smoothlab::rng::{self, Stream};
use smoothlab::tensor::{finite_difference_check_multi, SparseOperator, Tape, Var};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_mat(seed: u64, r: usize, c: usize) -> Mat {
    let mut g = rng::indexed(seed, Stream::Experiment, 7);
    Mat::from_fn(r, c, |_, _| g.random_range(-1.0..1.0))
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn closed_forms() -> Verdict {
    let t = Instant::now();
    let rows = run_suite(&VerifyConfig::default(), ExecMode::Serial);
    let elapsed = t.elapsed();
    let mut worst: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    let mut ok = true;
    for r in rows.iter().filter(|r| !r.suite.starts_with("lemma")) {
        let e = worst.entry(r.suite).or_insert((0, 0.0));
        e.0 += 1;
        e.1 = e.1.max(r.value);
        ok &= r.passed() && r.value < 1e-8;
    }
    let counts_ok = ["resgcn", "appnp", "psnr"].iter().all(|s| worst.get(s).is_some_and(|w| w.0 == 50));
    let summary: Vec<String> = worst.iter().map(|(s, (n, w))| format!("{s} {n}x max {w:.1e}")).collect();
    verdict(
        ok && counts_ok && within(elapsed, 10.0),
        format!("{}; {:.2}s", summary.join(", "), elapsed.as_secs_f64()),
    )
}

fn lemma_suites() -> Verdict {
    let rows = run_suite(&VerifyConfig::default(), ExecMode::Serial);
    let mut detail = Vec::new();
    let mut ok = true;
    for suite in ["lemma1", "lemma2"] {
        let of: Vec<_> = rows.iter().filter(|r| r.suite == suite).collect();
        let worst = of.iter().map(|r| r.value).fold(0.0, f64::max);
        ok &= of.len() == 200 && of.iter().all(|r| r.value < 1e-9);
        detail.push(format!("{suite} {} draws max residual {worst:.1e}", of.len()));
    }
    verdict(ok, detail.join(", "))
}

type Prog = Box<dyn Fn(&mut Tape, &[Var]) -> smoothlab::Result<Var>>;

fn gradient_integrity() -> Verdict {
    let t0 = Instant::now();
    let g = Graph::build(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)], 6).unwrap();
    let support = SparseOperator::new(g.augmented_adjacency());
    let prop = SparseOperator::new(normalize(&g, NormKind::Symmetric).matrix);
    let n = 6;
    let cases: Vec<(&str, Vec<(usize, usize)>, Prog)> = vec![
        ("matmul", vec![(n, 4), (4, 3)], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("add", vec![(n, 3), (n, 3)], Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", vec![(n, 3), (n, 3)], Box::new(|t, v| t.sub(v[0], v[1]))),
        ("scale", vec![(n, 3)], Box::new(|t, v| t.scale(v[0], 0.6))),
        ("scale_by_var", vec![(1, 1), (n, 3)], Box::new(|t, v| t.scale_by_var(v[0], v[1]))),
        ("hadamard", vec![(n, 3), (n, 3)], Box::new(|t, v| t.hadamard(v[0], v[1]))),
        ("row_broadcast_add", vec![(n, 3), (1, 3)], Box::new(|t, v| t.row_broadcast_add(v[0], v[1]))),
        ("row_scale", vec![(n, 1), (n, 3)], Box::new(|t, v| t.row_scale(v[0], v[1]))),
        ("sigmoid", vec![(n, 3)], Box::new(|t, v| t.sigmoid(v[0]))),
        ("relu", vec![(n, 3)], Box::new(|t, v| t.relu(v[0]))),
        ("elu", vec![(n, 3)], Box::new(|t, v| t.elu(v[0]))),
        ("softplus", vec![(n, 3)], Box::new(|t, v| t.softplus(v[0]))),
        ("log_softmax_rows", vec![(n, 3)], Box::new(|t, v| t.log_softmax_rows(v[0]))),
        ("concat_cols", vec![(n, 2), (n, 1)], Box::new(|t, v| t.concat_cols(&[v[0], v[1]]))),
        ("select_cols", vec![(n, 4)], Box::new(|t, v| t.select_cols(v[0], 1, 2))),
        ("row_select", vec![(n, 3)], Box::new(|t, v| t.row_select(v[0], &[5, 0, 5, 2]))),
        ("max_elementwise", vec![(n, 3), (n, 3)], Box::new(|t, v| t.max_elementwise(v))),
        (
            "noise_inject",
            vec![(n, 3), (n, 3)],
            Box::new(|t, v| t.noise_inject(v[0], v[1], Mat::from_fn(6, 3, |i, j| 0.3 * i as f64 - 0.2 * j as f64))),
        ),
        (
            "dropout",
            vec![(n, 3)],
            Box::new(|t, v| t.dropout(v[0], 0.4, true, &mut rng::indexed(1, Stream::Dropout, 0))),
        ),
        ("propagate", vec![(n, 3)], Box::new(move |t, v| t.propagate(&prop, v[0]))),
        (
            "edge_softmax_aggregate",
            vec![(n, 3), (n, 1), (n, 1)],
            Box::new(move |t, v| t.edge_softmax_aggregate(&support, v[0], v[1], v[2])),
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut worst_name = "";
    for (name, shapes, prog) in &cases {
        for point in 0..5u64 {
            let inputs: Vec<Mat> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(r, c))| random_mat(100 * point + i as u64, r, c).scale(1.5))
                .collect();
            let err = finite_difference_check_multi(
                |t, v| {
                    let y = prog(t, v)?;
                    let (r, c) = t.shape(y);
                    let w = t.constant(Mat::from_fn(r, c, |i, j| ((i * 3 + j) as f64 * 0.71).sin() + 0.2));
                    let p = t.hadamard(y, w)?;
                    t.sum(p)
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            if err > worst {
                worst = err;
                worst_name = name;
            }
        }
    }

    let ctx = GraphContext::new(&g);
    let cfg = ModelConfig {
        backbone: Backbone::Gcn,
        depth: 4,
        hidden: 4,
        classes: 2,
        residual: ResidualKind::Psnr(EncoderKind::Gcn),
        dropout: 0.0,
        seed: 3,
    };
    let model = build_model(&cfg, 3).unwrap();
    let x = random_mat(9, 6, 3);
    let labels = [0, 1, 0, 1, 1, 0];
    let rows: Vec<usize> = (0..6).collect();
    let noise = Noise::frozen(&mut rng::stream(4, Stream::Noise), model.psnr_steps(), 6);
    let mut params = model.params().to_vec();
    // standard-normal classifier weights saturate the softmax; shrink them
    let head = params.len() - 2;
    params[head] = params[head].scale(0.3);
    let model_err = finite_difference_check_multi(
        |t, vars| {
            let out = model.forward_vars(t, vars, &ctx, &x, &mut Forward::eval(noise.clone()))?;
            cross_entropy(t, out.logits, &labels, &rows)
        },
        &params,
        1e-6,
    )
    .unwrap();
    let elapsed = t0.elapsed();
    verdict(
        worst < 1e-4 && model_err < 1e-4 && within(elapsed, 30.0),
        format!(
            "{} primitives max {worst:.1e} ({worst_name}), 4-layer PSNR loss {model_err:.1e}; {:.2}s",
            cases.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn linear_bridge() -> Verdict {
    let (n, d, depth) = (9, 4, 6);
    let g = random_connected_graph(21, n, 0.4).unwrap();
    let ctx = GraphContext::new(&g);
    let cfg = ModelConfig {
        backbone: Backbone::Gcn,
        depth,
        hidden: d,
        classes: 2,
        residual: ResidualKind::Psnr(EncoderKind::Gcn),
        dropout: 0.0,
        seed: 8,
    };
    let mut model = build_model(&cfg, d).unwrap();
    for layer in 1..=depth {
        let i = model.conv_weight_index(layer).unwrap();
        model.params_mut()[i] = Mat::identity(d);
    }
    let x = random_mat(22, n, d);
    let mut tape = Tape::new();
    let mut fwd = Forward {
        activate: false,
        ..Forward::eval(Noise::Disabled)
    };
    let out = model.forward(&mut tape, &ctx, &x, &mut fwd).unwrap();
    let lambdas: Vec<Vec<f64>> = out.traces.iter().map(|tr| tr.coefficients()).collect();
    let want = iterate_linear(&LinearDynamic {
        kind: LinearKind::Psnr { lambdas },
        n: ctx.norm.matrix().to_dense(),
        h: x,
        k: depth,
    })
    .unwrap();
    let err = tape.value(*out.layers.last().unwrap()).max_abs_diff(&want);
    verdict(err < 1e-10, format!("K={depth}, max abs deviation {err:.1e}"))
}

fn brute_smv(x: &Mat) -> f64 {
    let n = x.rows();
    let unit = |i: usize| {
        let r = x.row(i);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.iter().map(|v| v / norm).collect::<Vec<_>>()
    };
    let mut per_node = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if i != j {
                let (a, b) = (unit(i), unit(j));
                s += 0.5 * a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            }
        }
        per_node += s / (n - 1) as f64;
    }
    per_node / n as f64
}

fn smv_correctness() -> Verdict {
    let same = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
    let identical = smv(&same, &[0, 1, 2]).unwrap();
    let ortho = smv(&Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &[0, 1]).unwrap();
    let ortho_err = (ortho - std::f64::consts::SQRT_2 / 2.0).abs();
    let mut scale_err: f64 = 0.0;
    let mut brute_err: f64 = 0.0;
    for s in 0..20u64 {
        let x = random_mat(300 + s, 7, 4);
        let all: Vec<usize> = (0..7).collect();
        let v = smv(&x, &all).unwrap();
        let factors: Vec<f64> = (0..7).map(|i| 0.1 + 3.0 * i as f64).collect();
        let scaled = Mat::from_fn(7, 4, |i, j| x[(i, j)] * factors[i]);
        scale_err = scale_err.max((smv(&scaled, &all).unwrap() - v).abs());
        brute_err = brute_err.max((brute_smv(&x) - v).abs());
    }
    verdict(
        identical == 0.0 && ortho_err < 1e-12 && scale_err < 1e-12 && brute_err < 1e-12,
        format!(
            "identical {identical}, orthogonal error {ortho_err:.1e}, scaling {scale_err:.1e}, brute force {brute_err:.1e}"
        ),
    )
}

fn proposition_one() -> Verdict {
    // fixed before gating from the calibration pilot
    const DECAY_LIMIT: f64 = 0.1;
    const SLACK: f64 = 0.02;
    const SHARE: f64 = 0.7;
    let t = Instant::now();
    let graph = random_connected_graph(0, 10, 0.3).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let traces = prop1_experiment(&graph, &Prop1Config::default(), &seeds, ExecMode::Serial).unwrap();
    let elapsed = t.elapsed();
    let fams = [Family::Product, Family::Plain];
    let monotone = traces.iter().all(|tr| fams.iter().all(|&f| tr.non_increasing(f)));
    let decayed = traces.iter().all(|tr| fams.iter().all(|&f| tr.decay(f) < DECAY_LIMIT));
    let slower = traces
        .iter()
        .filter(|tr| tr.geometric_mean(Family::Product) >= tr.geometric_mean(Family::Plain) - SLACK)
        .count();
    let share = slower as f64 / traces.len() as f64;
    let worst_decay = traces
        .iter()
        .flat_map(|tr| fams.map(|f| tr.decay(f)))
        .fold(0.0, f64::max);
    verdict(
        monotone && decayed && share >= SHARE && within(elapsed, 20.0),
        format!(
            "non-increasing {monotone}, worst decay {worst_decay:.1e}, product slower in {slower}/{} seeds; {:.2}s",
            traces.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Desk-scale training budget fixed by the calibration pilot.
fn depth_budget() -> Hyper {
    Hyper {
        lrs: vec![0.01],
        hidden: 32,
        max_epochs: 200,
        patience: 50,
        ..Hyper::default()
    }
}

fn depth_rows(kinds: Vec<ResidualKind>, depths: Vec<usize>, missing: bool) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for seed in 0..5u64 {
        let data = gen_sbm(&SbmParams { seed, ..SbmParams::default() }).unwrap();
        let spec = SweepSpec {
            base: ModelConfig {
                backbone: Backbone::Gcn,
                depth: 2,
                hidden: 32,
                classes: data.classes,
                residual: ResidualKind::None,
                dropout: 0.5,
                seed,
            },
            kinds: kinds.clone(),
            depths: depths.clone(),
            seeds: vec![seed],
            policy: SplitPolicy::PerClass { train: 20, val: 30, test: 100 },
            missing,
            hyper: depth_budget(),
        };
        rows.extend(depth_sweep(&spec, &data, ExecMode::Serial));
    }
    rows
}

fn test_acc(r: &SweepRow) -> f64 {
    r.outcome.as_ref().map(|c| c.test_acc).expect("sweep cell trained")
}

fn over_smoothing_shape() -> Verdict {
    let t = Instant::now();
    let rows = depth_rows(
        vec![ResidualKind::None, ResidualKind::Psnr(EncoderKind::Gcn)],
        vec![2, 32],
        false,
    );
    let elapsed = t.elapsed();
    let mean = |name: &str, depth: usize| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.residual.name() == name && r.depth == depth)
            .map(test_acc)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (g2, g32, p2, p32) = (mean("none", 2), mean("none", 32), mean("psnr", 2), mean("psnr", 32));
    verdict(
        g32 <= g2 - 0.10 && (p32 - p2).abs() <= 0.05 && within(elapsed, 300.0),
        format!(
            "GCN {g2:.3} -> {g32:.3}, PSNR {p2:.3} -> {p32:.3} (depth 2 -> 32, mean of 5 seeds); {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn missing_feature_shift() -> Verdict {
    let depths = vec![2, 4, 8, 16];
    let rows = depth_rows(vec![ResidualKind::Psnr(EncoderKind::Gcn)], depths.clone(), true);
    let mut best = Vec::new();
    for seed in 0..5u64 {
        let of: Vec<&SweepRow> = rows.iter().filter(|r| r.seed == seed).collect();
        // ties go to the shallower depth
        let top = of.iter().fold(None::<&&SweepRow>, |b, r| match b {
            Some(b) if test_acc(b) >= test_acc(r) => Some(b),
            _ => Some(r),
        });
        best.push(top.expect("rows for every seed").depth);
    }
    let deeper = best.iter().filter(|&&d| d > 2).count();
    verdict(deeper >= 3, format!("best depth per seed {best:?}; deeper than 2 in {deeper}/5"))
}

fn parameter_accounting() -> Verdict {
    let (f, h, c) = (8, 16, 3);
    let cfg = |residual, depth| ModelConfig {
        backbone: Backbone::Gcn,
        depth,
        hidden: h,
        classes: c,
        residual,
        dropout: 0.5,
        seed: 0,
    };
    let psnr = ResidualKind::Psnr(EncoderKind::Gcn);
    let e2 = build_model(&cfg(psnr, 2), f).unwrap().encoder_param_count();
    let e64 = build_model(&cfg(psnr, 64), f).unwrap().encoder_param_count();
    // encoder weight h x 2, bias 1 x 2, and the scalar layer-embedding weight
    let enc_expected = 2 * h + 2 + 1;

    let dense_expected = |k: usize| f * h + (2..=k).map(|j| (j - 1) * h * h).sum::<usize>() + h * c + c;
    let counts: Vec<usize> = (1..=8)
        .map(|k| build_model(&cfg(ResidualKind::Dense, k), f).unwrap().param_count())
        .collect();
    let exact = counts.iter().enumerate().all(|(i, &n)| n == dense_expected(i + 1));
    let growing = counts.windows(2).all(|w| w[1] > w[0]);
    verdict(
        e2 == enc_expected && e64 == enc_expected && exact && growing,
        format!("PSNR encoder {e2} at depth 2, {e64} at depth 64; dense counts {counts:?}"),
    )
}

fn run_cli(bin: &str, args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(bin)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .map(|it| {
            it.map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect()
        })
        .unwrap_or_default()
}

fn cli_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_smoothlab");
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let (code, err) = run_cli(bin, &["gen", "--sbm", "2x40", "--p-in", "0.2", "--p-out", "0.02", "--seed", "3"], &data);
    if code != 0 {
        return verdict(false, format!("gen failed: {err}"));
    }
    let ds = data.to_str().unwrap();
    let small = ["--hidden", "8", "--epochs", "15", "--patience", "5", "--split", "per-class:8,8,20", "--eval-draws", "2"];
    let with = |head: &[&'static str]| -> Vec<String> { head.iter().chain(small.iter()).map(|s| s.to_string()).collect() };
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("verify", ["verify", "--n", "8", "--k", "6", "--instances", "20", "--seed", "1"].map(String::from).to_vec()),
        ("gen", ["gen", "--sbm", "2x30", "--p-in", "0.3", "--p-out", "0.05", "--seed", "5"].map(String::from).to_vec()),
        ("train", [vec!["train".into(), "--dataset".into(), ds.into()], with(&["--depths", "2,3", "--residual", "psnr", "--seed", "2"])].concat()),
        (
            "sweep",
            [vec!["sweep".into(), "--dataset".into(), ds.into()], with(&["--depths", "2,4", "--seeds", "0,1", "--residual", "none,psnr"])].concat(),
        ),
        ("smooth", [vec!["smooth".into(), "--dataset".into(), ds.into()], with(&["--layers-grid", "2,4", "--seed", "1"])].concat()),
        ("converge", ["converge", "--seeds", "0,1,2", "--k-max", "30", "--eps-low", "0.5", "--seed", "4"].map(String::from).to_vec()),
        ("coeffs", [vec!["coeffs".into(), "--dataset".into(), ds.into()], with(&["--depths", "4", "--encoder", "sage"])].concat()),
    ];
    let mut failures = Vec::new();
    for (name, args) in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (a_dir, b_dir) = (tmp.path().join(format!("{name}-a")), tmp.path().join(format!("{name}-b")));
        let (ca, ea) = run_cli(bin, &args, &a_dir);
        let (cb, _) = run_cli(bin, &args, &b_dir);
        let (a, b) = (dir_bytes(&a_dir), dir_bytes(&b_dir));
        if ca != 0 || cb != 0 {
            failures.push(format!("{name} exited {ca}/{cb}: {}", ea.lines().last().unwrap_or("")));
        } else if a.is_empty() || a != b {
            failures.push(format!("{name} outputs differ"));
        }
    }
    // worker count must not change the bytes either
    let sweep_args: Vec<String> = runs[3].1.clone();
    let mut par_args: Vec<&str> = sweep_args.iter().map(String::as_str).collect();
    par_args.extend(["--workers", "3"]);
    let par_dir = tmp.path().join("sweep-par");
    run_cli(bin, &par_args, &par_dir);
    if dir_bytes(&par_dir) != dir_bytes(&tmp.path().join("sweep-a")) {
        failures.push("sweep output depends on worker count".into());
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} subcommands byte-identical on rerun, sweep identical across worker counts", runs.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Verdict)> = vec![
        (1, "closed-form equivalence", closed_forms),
        (2, "lemma suites", lemma_suites),
        (3, "gradient integrity", gradient_integrity),
        (4, "linear bridge", linear_bridge),
        (5, "SMV correctness", smv_correctness),
        (6, "row-stochastic product convergence", proposition_one),
        (7, "over-smoothing shape", over_smoothing_shape),
        (8, "missing-feature depth shift", missing_feature_shift),
        (9, "parameter accounting", parameter_accounting),
        (10, "CLI determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!("criterion {id:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

