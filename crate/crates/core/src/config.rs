//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::hierarchy::SaStageConfig;
use crate::jacobi::JacobiParams;
use crate::models::{Branch, DecoderKind, ModelConfig};
use crate::train::TrainConfig;

/// Where a default comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// The reference architecture or training recipe states this value.
    Published,
    /// Not stated by the reference; a common default is used.
    Conventional,
    /// Needed by this implementation only (paths, seeds, format switches).
    Implementation,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Published => "published",
            Provenance::Conventional => "conventional",
            Provenance::Implementation => "implementation",
        }
    }
}

pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    pub provenance: Provenance,
}

const fn key(key: &'static str, default: &'static str, help: &'static str, provenance: Provenance) -> KeyDoc {
    KeyDoc {
        key,
        default,
        help,
        provenance,
    }
}

use Provenance::{Conventional as C, Implementation as I, Published as P};

/// Every accepted key. Defaults marked `cls / seg` depend on `model.branch`.
pub const KEYS: &[KeyDoc] = &[
    key("model.branch", "classification", "classification | part_seg | semantic_seg | hierarchical; selects the defaults below", I),
    key("model.input_dim", "6 / 3 (part) / 9 (semantic) / 3 (hier)", "features per point", P),
    key("model.num_classes", "40 / 50 (part) / 13 (semantic)", "output classes", P),
    key("model.encoder_widths", "3072 / 640,5120 / 256,512,1024 (hier global stage)", "shared KAN widths", P),
    key("model.decoder_widths", "none / 640 / 512,256 (hier head)", "hidden decoder widths before the output layer", P),
    key("model.decoder_kind", "kan / kan / mlp (hier)", "kan | mlp for every decoder layer", P),
    key("model.degree", "4 / 2", "Jacobi polynomial degree", P),
    key("model.alpha", "1 / -0.5", "Jacobi alpha", P),
    key("model.beta", "1 / -0.5", "Jacobi beta", P),
    key("model.one_hot_size", "0 / 16 (part)", "category one-hot width for part segmentation", P),
    key("model.bn_momentum", "0.9", "weight kept on the running batch-norm statistics", C),
    key("model.bn_eps", "1e-5", "batch-norm epsilon", C),
    key("model.dropout", "0 / 0.4 (hier)", "dropout after hidden decoder layers", P),
    key("model.sa_stages", "512:0.2:32:64,64,128 128:0.4:64:128,128,256 (hier)", "centroids:radius:neighbors:widths per stage", P),
    key("model.fps_random_start", "false", "random first farthest-point centroid instead of index 0", I),
    key("train.batch_size", "64 / 32", "clouds per step", P),
    key("train.lr", "0.0005 / 0.001", "initial learning rate", P),
    key("train.beta1", "0.9", "Adam beta1", P),
    key("train.beta2", "0.999", "Adam beta2", P),
    key("train.eps", "1e-8", "Adam epsilon", C),
    key("train.lr_decay", "0.5", "learning-rate factor per decay period", P),
    key("train.decay_every", "20", "epochs per decay period", P),
    key("train.epochs", "100", "training epochs (60 suffices for the synthetic tasks)", C),
    key("train.train_split", "train", "split used for training", I),
    key("train.val_split", "auto", "validation split; auto = val, else test", I),
    key("train.restrict_parts", "true", "part segmentation argmax over the category's parts only", C),
    key("data.dataset", "", "dataset directory", I),
    key("data.checkpoint", "", "checkpoint path", I),
    key("data.log", "", "per-epoch CSV log path", I),
    key("run.seed", "0", "seed for initialization, shuffling, dropout and sampling", I),
];

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub seed: u64,
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let v = v.trim();
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: '{v}' is not a comma-separated list of integers")))
        })
        .collect()
}

fn list_text(v: &[usize]) -> String {
    if v.is_empty() {
        return "none".into();
    }
    v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected 'section.key = value'", origin.display(), i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{s}' is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn set_model(m: &mut ModelConfig, key: &str, v: &str) -> Result<()> {
    let poly = |a: f64, b: f64, n: usize| JacobiParams::new(a, b, n);
    match key {
        "model.branch" => {
            let b = Branch::parse(v.trim())?;
            if b != m.branch {
                *m = ModelConfig::for_branch(b);
            }
        }
        "model.input_dim" => m.input_dim = parse_num(key, v)?,
        "model.num_classes" => m.num_classes = parse_num(key, v)?,
        "model.encoder_widths" => m.encoder_widths = parse_list(key, v)?,
        "model.decoder_widths" => m.decoder_widths = parse_list(key, v)?,
        "model.decoder_kind" => m.decoder_kind = DecoderKind::parse(v.trim())?,
        "model.degree" => m.poly = poly(m.poly.alpha(), m.poly.beta(), parse_num(key, v)?)?,
        "model.alpha" => m.poly = poly(parse_num(key, v)?, m.poly.beta(), m.poly.degree())?,
        "model.beta" => m.poly = poly(m.poly.alpha(), parse_num(key, v)?, m.poly.degree())?,
        "model.one_hot_size" => m.one_hot_size = parse_num(key, v)?,
        "model.bn_momentum" => m.bn_momentum = parse_num(key, v)?,
        "model.bn_eps" => m.bn_eps = parse_num(key, v)?,
        "model.dropout" => m.dropout = parse_num(key, v)?,
        "model.sa_stages" => {
            m.sa_stages = v
                .split_whitespace()
                .filter(|s| *s != "none")
                .map(SaStageConfig::parse_spec)
                .collect::<Result<_>>()?
        }
        "model.fps_random_start" => m.fps_random_start = parse_bool(key, v)?,
        other => return Err(Error::Config(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

fn model_get(m: &ModelConfig, key: &str) -> Option<String> {
    Some(match key {
        "model.branch" => m.branch.as_str().into(),
        "model.input_dim" => m.input_dim.to_string(),
        "model.num_classes" => m.num_classes.to_string(),
        "model.encoder_widths" => list_text(&m.encoder_widths),
        "model.decoder_widths" => list_text(&m.decoder_widths),
        "model.decoder_kind" => m.decoder_kind.as_str().into(),
        "model.degree" => m.poly.degree().to_string(),
        "model.alpha" => m.poly.alpha().to_string(),
        "model.beta" => m.poly.beta().to_string(),
        "model.one_hot_size" => m.one_hot_size.to_string(),
        "model.bn_momentum" => m.bn_momentum.to_string(),
        "model.bn_eps" => m.bn_eps.to_string(),
        "model.dropout" => m.dropout.to_string(),
        "model.sa_stages" => {
            if m.sa_stages.is_empty() {
                "none".into()
            } else {
                m.sa_stages.iter().map(SaStageConfig::to_spec).collect::<Vec<_>>().join(" ")
            }
        }
        "model.fps_random_start" => m.fps_random_start.to_string(),
        _ => return None,
    })
}

/// The `model.*` section as config text; parsed back by [`model_from_text`].
pub fn model_to_text(m: &ModelConfig) -> String {
    let mut s = String::from("# per-point decoder input order: local, global, one_hot\n");
    for k in KEYS.iter().filter(|k| k.key.starts_with("model.")) {
        let _ = writeln!(s, "{} = {}", k.key, model_get(m, k.key).expect("model key"));
    }
    s
}

pub fn model_from_text(text: &str, origin: &Path) -> Result<ModelConfig> {
    let pairs = parse_pairs(text, origin)?;
    let branch = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "model.branch")
        .map(|(_, v)| Branch::parse(v))
        .transpose()?
        .unwrap_or(Branch::Classification);
    let mut m = ModelConfig::for_branch(branch);
    for (k, v) in &pairs {
        if k != "model.branch" {
            set_model(&mut m, k, v)?;
        }
    }
    m.validate()?;
    Ok(m)
}

impl RunConfig {
    pub fn for_branch(branch: Branch) -> Self {
        Self {
            model: ModelConfig::for_branch(branch),
            train: TrainConfig::for_task(branch.task()),
            dataset: None,
            checkpoint: None,
            log: None,
            seed: 0,
        }
    }

    /// Applies `pairs` in order on top of the defaults for the last
    /// `model.branch` given (classification if none).
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let branch = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "model.branch")
            .map(|(_, v)| Branch::parse(v))
            .transpose()?
            .unwrap_or(Branch::Classification);
        let mut cfg = Self::for_branch(branch);
        for (k, v) in pairs {
            if k != "model.branch" {
                cfg.set(k, v)?;
            }
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Reads an optional config file, then applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                parse_pairs(&text, p)?
            }
            None => Vec::new(),
        };
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if key.starts_with("model.") {
            return set_model(&mut self.model, key, v);
        }
        let t = &mut self.train;
        match key {
            "train.batch_size" => t.batch_size = parse_num(key, v)?,
            "train.lr" => t.lr = parse_num(key, v)?,
            "train.beta1" => t.beta1 = parse_num(key, v)?,
            "train.beta2" => t.beta2 = parse_num(key, v)?,
            "train.eps" => t.eps = parse_num(key, v)?,
            "train.lr_decay" => t.lr_decay = parse_num(key, v)?,
            "train.decay_every" => t.decay_every = parse_num(key, v)?,
            "train.epochs" => t.epochs = parse_num(key, v)?,
            "train.train_split" => t.train_split = v.trim().to_string(),
            "train.val_split" => {
                t.val_split = match v.trim() {
                    "auto" | "" => None,
                    s => Some(s.to_string()),
                }
            }
            "train.restrict_parts" => t.restrict_parts = parse_bool(key, v)?,
            "data.dataset" => self.dataset = opt_path(v),
            "data.checkpoint" => self.checkpoint = opt_path(v),
            "data.log" => self.log = opt_path(v),
            "run.seed" => {
                self.seed = parse_num(key, v)?;
                t.seed = self.seed;
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = model_get(&self.model, key) {
            return Some(v);
        }
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        Some(match key {
            "train.batch_size" => t.batch_size.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.beta1" => t.beta1.to_string(),
            "train.beta2" => t.beta2.to_string(),
            "train.eps" => t.eps.to_string(),
            "train.lr_decay" => t.lr_decay.to_string(),
            "train.decay_every" => t.decay_every.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.train_split" => t.train_split.clone(),
            "train.val_split" => t.val_split.clone().unwrap_or_else(|| "auto".into()),
            "train.restrict_parts" => t.restrict_parts.to_string(),
            "data.dataset" => path(&self.dataset),
            "data.checkpoint" => path(&self.checkpoint),
            "data.log" => path(&self.log),
            "run.seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Full config as text, one key per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{} = {}", k.key, self.get(k.key).expect("known key"));
        }
        s
    }

    pub fn task(&self) -> Task {
        self.model.branch.task()
    }
}

/// Key table for `--help`.
pub fn keys_help() -> String {
    let mut s = String::from("Config keys (file lines 'section.key = value', or --set key=value):\n");
    for k in KEYS {
        let _ = writeln!(s, "  {:<24} [{}] default: {}\n      {}", k.key, k.provenance.as_str(), k.default, k.help);
    }
    s
}
