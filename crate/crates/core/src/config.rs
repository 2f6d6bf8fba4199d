//! Plain-text `key = value` run configuration.
//!
//! Every key has a default, printed by [`RunConfig::dump`]; feeding the dump
//! back through [`RunConfig::parse`] reproduces the configuration. Unknown
//! keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{GeneratorConfig, QType};
use crate::error::{Result, SanError};
use crate::model::ModelConfig;
use crate::question::EncoderKind;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out: PathBuf,
    /// Empty means `<out>/model.sanc`.
    pub checkpoint: Option<PathBuf>,
    pub generator: GeneratorConfig,
    /// Question counts for train, val and test.
    pub split_sizes: [usize; 3],
    /// Vocabulary sizes and `raw_dim` are taken from the dataset at train time.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Learning-rate candidates; empty skips the search and uses `train.lr`.
    pub lr_grid: Vec<f64>,
    pub grid_epochs: usize,
    pub eval_split: String,
    /// Empty means the built-in answer taxonomy.
    pub taxonomy: Option<PathBuf>,
    /// `<split>-<index>`.
    pub attend_sample: String,
    pub attend_size: usize,
    /// `None` means half the region block side.
    pub attend_sigma: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data_dir: PathBuf::from("data"),
            out: PathBuf::from("run"),
            checkpoint: None,
            generator: GeneratorConfig::default(),
            split_sizes: [2000, 500, 500],
            model: ModelConfig { embed_dim: 32, hidden: 32, cnn_filters: [8, 12, 12], ..ModelConfig::default() },
            train: TrainConfig::default(),
            lr_grid: Vec::new(),
            grid_epochs: 5,
            eval_split: "test".into(),
            taxonomy: None,
            attend_sample: "test-0".into(),
            attend_size: 448,
            attend_sigma: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| SanError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|p| !p.is_empty()).map(|p| num(key, p)).collect()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

const DERIVED_MODEL_KEYS: [&str; 4] = ["vocab_size", "answer_count", "raw_dim", "init_seed"];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "data.dir" => self.data_dir = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "gen.grid_side" => self.generator.grid_side = num(key, v)?,
            "gen.raw_dim" => self.generator.raw_dim = num(key, v)?,
            "gen.noise" => self.generator.noise = num(key, v)?,
            "gen.min_objects" => self.generator.min_objects = num(key, v)?,
            "gen.max_objects" => self.generator.max_objects = num(key, v)?,
            "gen.qtypes" => self.generator.qtypes = list::<QType>(key, v)?,
            "gen.questions_per_scene" => self.generator.questions_per_scene = num(key, v)?,
            "gen.train" => self.split_sizes[0] = num(key, v)?,
            "gen.val" => self.split_sizes[1] = num(key, v)?,
            "gen.test" => self.split_sizes[2] = num(key, v)?,
            "train.lr" => self.train.lr = num(key, v)?,
            "train.lr_grid" => self.lr_grid = list(key, v)?,
            "train.grid_epochs" => self.grid_epochs = num(key, v)?,
            "train.momentum" => self.train.momentum = num(key, v)?,
            "train.batch_size" => self.train.batch_size = num(key, v)?,
            "train.clip" => self.train.clip = num(key, v)?,
            "train.dropout" => self.train.dropout = num(key, v)?,
            "train.epochs" => self.train.epochs = num(key, v)?,
            "eval.split" => self.eval_split = v.to_string(),
            "eval.taxonomy" => self.taxonomy = opt_path(v),
            "attend.sample" => self.attend_sample = v.to_string(),
            "attend.size" => self.attend_size = num(key, v)?,
            "attend.sigma" => self.attend_sigma = if v == "auto" { None } else { Some(num(key, v)?) },
            _ => match key.strip_prefix("model.") {
                Some(k) if DERIVED_MODEL_KEYS.contains(&k) => {
                    return Err(SanError::Config(format!(
                        "{key} is derived from the dataset or seed and cannot be set"
                    )))
                }
                Some(k) => self.model.set(k, v)?,
                None => return Err(SanError::Config(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SanError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| SanError::io(path, e))?)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| SanError::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let g = &self.generator;
        let t = &self.train;
        let mut out: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("data.dir".into(), self.data_dir.display().to_string()),
            ("out".into(), self.out.display().to_string()),
            ("checkpoint".into(), path(&self.checkpoint)),
            ("gen.grid_side".into(), g.grid_side.to_string()),
            ("gen.raw_dim".into(), g.raw_dim.to_string()),
            ("gen.noise".into(), g.noise.to_string()),
            ("gen.min_objects".into(), g.min_objects.to_string()),
            ("gen.max_objects".into(), g.max_objects.to_string()),
            ("gen.qtypes".into(), join(&g.qtypes)),
            ("gen.questions_per_scene".into(), g.questions_per_scene.to_string()),
            ("gen.train".into(), self.split_sizes[0].to_string()),
            ("gen.val".into(), self.split_sizes[1].to_string()),
            ("gen.test".into(), self.split_sizes[2].to_string()),
        ];
        for (k, v) in self.model.to_pairs() {
            if !DERIVED_MODEL_KEYS.contains(&k.as_str()) {
                out.push((format!("model.{k}"), v));
            }
        }
        out.extend([
            ("train.lr".into(), t.lr.to_string()),
            ("train.lr_grid".into(), join(&self.lr_grid)),
            ("train.grid_epochs".into(), self.grid_epochs.to_string()),
            ("train.momentum".into(), t.momentum.to_string()),
            ("train.batch_size".into(), t.batch_size.to_string()),
            ("train.clip".into(), t.clip.to_string()),
            ("train.dropout".into(), t.dropout.to_string()),
            ("train.epochs".into(), t.epochs.to_string()),
            ("eval.split".into(), self.eval_split.clone()),
            ("eval.taxonomy".into(), path(&self.taxonomy)),
            ("attend.sample".into(), self.attend_sample.clone()),
            ("attend.size".into(), self.attend_size.to_string()),
            ("attend.sigma".into(), self.attend_sigma.map_or("auto".into(), |s| s.to_string())),
        ]);
        out
    }

    pub fn dump(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.sanc"))
    }

    /// Training hyper-parameters with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.train.clone() }
    }

    /// Model shape for a dataset with the given vocabulary sizes.
    pub fn model_config(&self, vocab_size: usize, answer_count: usize, raw_dim: usize) -> ModelConfig {
        ModelConfig { vocab_size, answer_count, raw_dim, init_seed: self.seed, ..self.model.clone() }
    }

    pub fn encoder(&self) -> EncoderKind {
        self.model.encoder
    }
}
