use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::split::SplitPolicy;
use super::sweep::SweepSpec;
use super::train::Hyper;
use crate::error::{Error, Result};
use crate::graph::{gen_sbm, io::load_dataset_dir, LabeledDataset, SbmParams};
use crate::layers::{Backbone, EncoderKind, JkAgg, ModelConfig, ResidualKind};

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Sbm(SbmParams),
}

impl DataSource {
    /// Loads the dataset; a generated SBM takes its seed from `seed`.
    pub fn load(&self, seed: u64) -> Result<LabeledDataset> {
        match self {
            DataSource::Dir(dir) => load_dataset_dir(dir),
            DataSource::Sbm(p) => gen_sbm(&SbmParams { seed, ..p.clone() }),
        }
    }
}

/// Experiment description read from a flat `key = value` file.
///
/// Recognized keys: `backbone`, `residual` (comma list), `alpha`, `encoder`,
/// `depths`, `seeds`, `dataset`, `sbm` (`BLOCKSxSIZE`), `p_in`, `p_out`,
/// `feat_dim`, `feat_shift`, `split.policy`, `split.missing`, `hyper.lr`
/// (comma list), `hyper.dropout`, `hyper.weight_decay`, `hyper.hidden`,
/// `hyper.max_epochs`, `hyper.patience`, `hyper.eval_draws`. Blank lines and
/// lines starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub backbone: Backbone,
    pub residuals: Vec<String>,
    pub alpha: f64,
    pub encoder: EncoderKind,
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub policy: SplitPolicy,
    pub missing: bool,
    pub hyper: Hyper,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            backbone: Backbone::Gcn,
            residuals: vec!["none".into()],
            alpha: 0.1,
            encoder: EncoderKind::Gcn,
            depths: vec![2, 4, 8, 16, 32, 64],
            seeds: vec![0],
            data: DataSource::Sbm(SbmParams::default()),
            policy: SplitPolicy::PerClass { train: 20, val: 30, test: 100 },
            missing: false,
            hyper: Hyper::default(),
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("bad list entry `{p}` in `{s}`"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("bad value `{v}` for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{v}` for {key}"))),
    }
}

pub fn parse_backbone(s: &str) -> Result<Backbone> {
    match s.trim() {
        "gcn" => Ok(Backbone::Gcn),
        "gat" => Ok(Backbone::Gat),
        other => Err(Error::Config(format!("unknown backbone `{other}`"))),
    }
}

pub fn parse_encoder(s: &str) -> Result<EncoderKind> {
    match s.trim() {
        "gcn" => Ok(EncoderKind::Gcn),
        "gat" => Ok(EncoderKind::Gat),
        "sage" => Ok(EncoderKind::Sage),
        other => Err(Error::Config(format!("unknown encoder `{other}`"))),
    }
}

pub fn parse_residual(name: &str, alpha: f64, encoder: EncoderKind) -> Result<ResidualKind> {
    match name.trim() {
        "none" => Ok(ResidualKind::None),
        "res" => Ok(ResidualKind::Res),
        "init-res" => Ok(ResidualKind::InitialRes { alpha }),
        "dense" => Ok(ResidualKind::Dense),
        "jk" => Ok(ResidualKind::Jk(JkAgg::Concat)),
        "jk-maxpool" => Ok(ResidualKind::Jk(JkAgg::MaxPool)),
        "psnr" => Ok(ResidualKind::Psnr(encoder)),
        other => Err(Error::Config(format!("unknown residual kind `{other}`"))),
    }
}

/// Parses `AxB` into (blocks, nodes per block).
pub fn parse_sbm_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("SBM shape `{s}` should look like 2x200"));
    let (a, b) = s.trim().split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn sbm_mut(&mut self) -> &mut SbmParams {
        if !matches!(self.data, DataSource::Sbm(_)) {
            self.data = DataSource::Sbm(SbmParams::default());
        }
        match &mut self.data {
            DataSource::Sbm(p) => p,
            DataSource::Dir(_) => unreachable!(),
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "backbone" => self.backbone = parse_backbone(v)?,
            "residual" => self.residuals = parse_list(v)?,
            "alpha" => self.alpha = parse_one(key, v)?,
            "encoder" => self.encoder = parse_encoder(v)?,
            "depths" => self.depths = parse_list(v)?,
            "seeds" => self.seeds = parse_list(v)?,
            "dataset" => self.data = DataSource::Dir(PathBuf::from(v)),
            "sbm" => {
                let (blocks, per_block) = parse_sbm_shape(v)?;
                let p = self.sbm_mut();
                p.blocks = blocks;
                p.per_block = per_block;
            }
            "p_in" => self.sbm_mut().p_in = parse_one(key, v)?,
            "p_out" => self.sbm_mut().p_out = parse_one(key, v)?,
            "feat_dim" => self.sbm_mut().feat_dim = parse_one(key, v)?,
            "feat_shift" => self.sbm_mut().feat_shift = parse_one(key, v)?,
            "split.policy" => self.policy = SplitPolicy::parse(v)?,
            "split.missing" => self.missing = parse_bool(key, v)?,
            "hyper.lr" => self.hyper.lrs = parse_list(v)?,
            "hyper.dropout" => self.hyper.dropout = parse_one(key, v)?,
            "hyper.weight_decay" => self.hyper.weight_decay = parse_one(key, v)?,
            "hyper.hidden" => self.hyper.hidden = parse_one(key, v)?,
            "hyper.max_epochs" => self.hyper.max_epochs = parse_one(key, v)?,
            "hyper.patience" => self.hyper.patience = parse_one(key, v)?,
            "hyper.eval_draws" => self.hyper.eval_draws = parse_one(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<ResidualKind>> {
        self.residuals
            .iter()
            .map(|r| parse_residual(r, self.alpha, self.encoder))
            .collect()
    }

    /// Sweep description for a dataset with `classes` classes. The base
    /// model takes its width and dropout from the hyperparameters.
    pub fn sweep_spec(&self, classes: usize) -> Result<SweepSpec> {
        let kinds = self.kinds()?;
        let base = ModelConfig {
            backbone: self.backbone,
            depth: 2,
            hidden: self.hyper.hidden,
            classes,
            residual: kinds.first().copied().unwrap_or(ResidualKind::None),
            dropout: self.hyper.dropout,
            seed: 0,
        };
        Ok(SweepSpec {
            base,
            kinds,
            depths: self.depths.clone(),
            seeds: self.seeds.clone(),
            policy: self.policy,
            missing: self.missing,
            hyper: self.hyper.clone(),
        })
    }
}
