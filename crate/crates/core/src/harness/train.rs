use log::{debug, info};

use super::coeffs::{coefficient_table, CoefficientRow};
use super::split::{apply_missing_features, Split};
use crate::error::{Error, Result};
use crate::graph::{degree_groups, LabeledDataset};
use crate::layers::{build_model, cross_entropy, Forward, GraphContext, Model, ModelConfig, Noise};
use crate::linalg::Mat;
use crate::metrics::{classification_accuracy, SmoothnessReport};
use crate::rng::{self, Stream};
use crate::tensor::{Adam, AdamConfig, Tape};

/// Optimization settings. `hidden` and `dropout` are the defaults used when a
/// model config is derived from these settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    /// Learning-rate grid; the run with the best validation accuracy wins.
    pub lrs: Vec<f64>,
    pub dropout: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Noise draws averaged when evaluating PSNR models.
    pub eval_draws: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lrs: vec![0.01, 0.001],
            dropout: 0.5,
            weight_decay: 5e-4,
            hidden: 128,
            max_epochs: 500,
            patience: 100,
            eval_draws: 5,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.lrs.is_empty() || self.lrs.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("learning rates {:?} must be positive", self.lrs)));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.eval_draws == 0 || self.hidden == 0 {
            return Err(Error::Config("epochs, patience, eval draws and hidden width must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("dropout must be in [0,1) and weight decay non-negative".into()));
        }
        Ok(())
    }

    /// `base` with this hidden width and dropout.
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            dropout: self.dropout,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrResult {
    pub lr: f64,
    pub best_epoch: usize,
    pub best_val: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub lr: f64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// SMV of every layer of the restored model over all nodes and degree
    /// groups.
    pub smv: SmoothnessReport,
    /// PSNR only: posterior statistics by layer and degree quartile.
    pub coefficients: Vec<CoefficientRow>,
    pub grid: Vec<LrResult>,
}

impl TrainReport {
    pub const EPOCH_HEADER: &'static str = "epoch,loss,val_acc";
    pub const SUMMARY_HEADER: &'static str = "lr,best_epoch,best_val,train_acc,test_acc,epochs_run";

    pub fn epoch_rows(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|e| format!("{},{:.12e},{:.6}", e.epoch, e.loss, e.val_acc))
            .collect()
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{}",
            self.lr,
            self.best_epoch,
            self.best_val,
            self.train_acc,
            self.test_acc,
            self.epochs.len()
        )
    }

    /// SMV of the last layer over all nodes.
    pub fn final_smv(&self) -> Option<f64> {
        self.smv
            .rows
            .iter()
            .filter(|r| r.group.is_none())
            .max_by_key(|r| r.layer)
            .map(|r| r.smv)
    }
}

/// Evaluation-time prediction. PSNR models are run once per fixed-seed noise
/// draw; other models once.
pub struct Evaluator<'a> {
    pub model: &'a Model,
    pub ctx: &'a GraphContext,
    pub features: &'a Mat,
    pub draws: usize,
    pub seed: u64,
}

impl Evaluator<'_> {
    fn draw_count(&self) -> usize {
        if self.model.is_psnr() {
            self.draws
        } else {
            1
        }
    }

    pub fn noise(&self, draw: usize) -> Noise {
        if self.model.is_psnr() {
            Noise::Sampled(rng::indexed(self.seed, Stream::Eval, draw as u64))
        } else {
            Noise::Disabled
        }
    }

    /// Logits of one evaluation draw.
    pub fn logits(&self, draw: usize) -> Result<Mat> {
        let mut tape = Tape::with_mode(Default::default());
        let mut fwd = Forward::eval(self.noise(draw));
        let out = self.model.forward(&mut tape, self.ctx, self.features, &mut fwd)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Accuracy on each mask, averaged over the draws.
    pub fn accuracy(&self, labels: &[usize], masks: &[&[usize]]) -> Result<Vec<f64>> {
        let draws = self.draw_count();
        let mut acc = vec![0.0; masks.len()];
        for d in 0..draws {
            let logits = self.logits(d)?;
            for (a, m) in acc.iter_mut().zip(masks) {
                *a += classification_accuracy(&logits, labels, m)?;
            }
        }
        Ok(acc.into_iter().map(|a| a / draws as f64).collect())
    }
}

struct RunOutcome {
    model: Model,
    epochs: Vec<EpochLog>,
    best_epoch: usize,
    best_val: f64,
}

fn run_lr(
    config: &ModelConfig,
    data: &LabeledDataset,
    ctx: &GraphContext,
    features: &Mat,
    split: &Split,
    hyper: &Hyper,
    lr: f64,
    seed: u64,
) -> Result<RunOutcome> {
    let mut model = build_model(config, features.cols())?;
    let mut adam = Adam::new(
        AdamConfig {
            lr,
            weight_decay: hyper.weight_decay,
            ..AdamConfig::default()
        },
        model.params(),
    );
    // validation falls back to the training nodes when no validation set exists
    let val_rows: &[usize] = if split.val.is_empty() { &split.train } else { &split.val };
    let mut best = model.params().to_vec();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=hyper.max_epochs {
        let diverged = |e: Error| match e {
            Error::Numeric(reason) | Error::LayerNumeric { reason, .. } => Error::Divergence { epoch, reason },
            other => other,
        };
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let mut fwd = Forward::train(
            rng::indexed(seed, Stream::Dropout, epoch as u64),
            Noise::Sampled(rng::indexed(seed, Stream::Noise, epoch as u64)),
        );
        let out = model
            .forward_vars(&mut tape, &vars, ctx, features, &mut fwd)
            .map_err(diverged)?;
        let loss_var = cross_entropy(&mut tape, out.logits, &data.labels, &split.train).map_err(diverged)?;
        let loss = tape.value(loss_var)[(0, 0)];
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, reason: format!("loss {loss}") });
        }
        let grads = tape.backward(loss_var).map_err(diverged)?;
        let grads: Vec<Mat> = vars
            .iter()
            .zip(model.params())
            .map(|(v, p)| grads.get_or_zeros(*v, p.shape()))
            .collect();
        adam.step(model.params_mut(), &grads);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch, reason: "non-finite parameters after update".into() });
        }

        let eval = Evaluator {
            model: &model,
            ctx,
            features,
            draws: hyper.eval_draws,
            seed,
        };
        let val_acc = eval.accuracy(&data.labels, &[val_rows]).map_err(diverged)?[0];
        epochs.push(EpochLog { epoch, loss, val_acc });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best.clone_from_slice(model.params());
        } else if epoch - best_epoch >= hyper.patience {
            debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }
    model.set_params(best)?;
    Ok(RunOutcome {
        model,
        epochs,
        best_epoch,
        best_val,
    })
}

/// Trains `config` once per learning rate in the grid and keeps the run with
/// the best validation accuracy (ties go to the lower rate).
pub fn train(config: &ModelConfig, data: &LabeledDataset, split: &Split, hyper: &Hyper, seed: u64) -> Result<TrainReport> {
    Ok(train_with_model(config, data, split, hyper, seed)?.0)
}

/// [`train`], also returning the restored model.
pub fn train_with_model(
    config: &ModelConfig,
    data: &LabeledDataset,
    split: &Split,
    hyper: &Hyper,
    seed: u64,
) -> Result<(TrainReport, Model)> {
    hyper.validate()?;
    config.validate()?;
    if config.classes != data.classes {
        return Err(Error::Config(format!(
            "model has {} classes, dataset {}",
            config.classes, data.classes
        )));
    }
    if split.n != data.n() {
        return Err(Error::Split(format!("split covers {} nodes, dataset has {}", split.n, data.n())));
    }
    let features = if split.missing_features {
        apply_missing_features(data.features.values(), split)?
    } else {
        data.features.values().clone()
    };
    let ctx = GraphContext::new(&data.graph);

    let mut lrs = hyper.lrs.clone();
    lrs.sort_by(f64::total_cmp);
    let mut grid = Vec::new();
    let mut chosen: Option<(RunOutcome, f64)> = None;
    for &lr in &lrs {
        let run = run_lr(config, data, &ctx, &features, split, hyper, lr, seed)?;
        let eval = Evaluator {
            model: &run.model,
            ctx: &ctx,
            features: &features,
            draws: hyper.eval_draws,
            seed,
        };
        let test_acc = if split.test.is_empty() {
            f64::NAN
        } else {
            eval.accuracy(&data.labels, &[&split.test])?[0]
        };
        info!("lr {lr}: best epoch {}, val {:.4}, test {test_acc:.4}", run.best_epoch, run.best_val);
        grid.push(LrResult {
            lr,
            best_epoch: run.best_epoch,
            best_val: run.best_val,
            test_acc,
        });
        if chosen.as_ref().is_none_or(|(c, _)| run.best_val > c.best_val) {
            chosen = Some((run, lr));
        }
    }
    let (run, lr) = chosen.expect("grid is nonempty");
    let eval = Evaluator {
        model: &run.model,
        ctx: &ctx,
        features: &features,
        draws: hyper.eval_draws,
        seed,
    };
    let train_acc = eval.accuracy(&data.labels, &[&split.train])?[0];
    let test_acc = grid.iter().find(|g| g.lr == lr).expect("chosen lr is in the grid").test_acc;

    let mut tape = Tape::new();
    let mut fwd = Forward::eval(eval.noise(0));
    let out = run.model.forward(&mut tape, &ctx, &features, &mut fwd)?;
    let groups = degree_groups(&data.graph);
    let mut smv = SmoothnessReport::default();
    for (i, layer) in out.layers.iter().enumerate() {
        smv.push_layer(i + 1, tape.value(*layer), &groups)?;
    }
    let coefficients = if run.model.is_psnr() {
        coefficient_table(&out.traces, &data.graph)
    } else {
        Vec::new()
    };

    let report = TrainReport {
        lr,
        epochs: run.epochs,
        best_epoch: run.best_epoch,
        best_val: run.best_val,
        train_acc,
        test_acc,
        smv,
        coefficients,
        grid,
    };
    Ok((report, run.model))
}
