//! Command implementations behind the `san` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{generate_splits, read_dataset, resolve, write_dataset, Dataset, DatasetLayout};
use crate::error::{Result, SanError};
use crate::metrics::{evaluate, EvalReport, TaxonomyTree, ANSWER_TAXONOMY};
use crate::model::{load_checkpoint, predict_answer, save_checkpoint, AttentionTrace, Checkpoint, SanModel};
use crate::train::{fit_with, grid_search_lr, EpochReport};
use crate::viz::{default_sigma, export_pgm, gaussian_blur, overlay_ascii, upsample_attention};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "san", version, about = "Stacked attention models on a synthetic grid-scene QA task")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test splits, vocabularies and feature files.
    GenData(CommonArgs),
    /// Train a model and write a checkpoint plus a JSONL run log.
    Train(CommonArgs),
    /// Score a checkpoint on a split.
    Eval(CommonArgs),
    /// Render per-layer attention heatmaps for one sample.
    Attend(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }
}

pub fn exit_code(e: &SanError) -> i32 {
    match e {
        SanError::Config(_) => EXIT_CONFIG,
        SanError::Numeric { .. } | SanError::Search(_) => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

/// Runs one parsed invocation, printing progress to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let (Command::GenData(args) | Command::Train(args) | Command::Eval(args) | Command::Attend(args)) = &cli.command;
    let cfg = args.resolve()?;
    if args.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    match &cli.command {
        Command::GenData(_) => {
            let root = cmd_gen_data(&cfg)?;
            println!("dataset written to {}", root.display());
        }
        Command::Train(_) => {
            let out = cmd_train_with(&cfg, |r| {
                let val = r.val_acc.map_or("-".into(), |v| format!("{v:.4}"));
                println!("epoch {:>3}  loss {:.4}  train_acc {:.4}  val_acc {val}", r.epoch, r.mean_loss, r.train_acc);
            })?;
            println!("{} checkpoint: {}", out.tag, out.checkpoint.display());
        }
        Command::Eval(_) => {
            let report = cmd_eval(&cfg)?;
            print!("{}", report.render());
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Attend(_) => {
            let out = cmd_attend(&cfg)?;
            if let Some(o) = &out.overlay {
                print!("{o}");
            }
            for f in &out.heatmaps {
                println!("wrote {}", f.display());
            }
            println!("predicted: {}", out.predicted);
        }
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| SanError::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| SanError::io(path, e))
}

/// Writes all three splits under `cfg.out` and returns that directory.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<PathBuf> {
    let splits = generate_splits(&cfg.generator, cfg.split_sizes, cfg.seed)?;
    let layout = DatasetLayout::new(&cfg.out);
    create_dir(&layout.root)?;
    let mut counts = serde_json::Map::new();
    for (name, ds) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        for s in &ds.samples {
            let words = ds.vocab.decode(&s.tokens)?;
            let r = resolve(&ds.scenes[&s.scene], &words)?;
            if ds.answers.id(&r.answer) != Some(s.answer) {
                return Err(SanError::Generation(format!("resolver disagrees on scene {}", s.scene)));
            }
        }
        write_dataset(&layout, name, ds)?;
        counts.insert(name.into(), json!({ "questions": ds.len(), "scenes": ds.features.len() }));
    }
    let g = &cfg.generator;
    let manifest = json!({
        "seed": cfg.seed,
        "grid_side": g.grid_side,
        "raw_dim": g.raw_dim,
        "noise": g.noise,
        "objects": [g.min_objects, g.max_objects],
        "qtypes": g.qtypes.iter().map(|q| q.as_str()).collect::<Vec<_>>(),
        "questions_per_scene": g.questions_per_scene,
        "splits": counts,
    });
    write_file(&layout.manifest(), serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    Ok(layout.root)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tag: String,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub lr: f64,
    pub reports: Vec<EpochReport>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cmd_train_with(cfg, |_| {})
}

pub fn cmd_train_with(cfg: &RunConfig, on_epoch: impl FnMut(&EpochReport)) -> Result<TrainOutcome> {
    let layout = DatasetLayout::new(&cfg.data_dir);
    let train = read_dataset(&layout, "train")?;
    let val = read_dataset(&layout, "val")?;
    let raw_dim = train
        .features
        .values()
        .next()
        .map(|f| f.raw_dim())
        .ok_or_else(|| SanError::Resolution("training split is empty".into()))?;
    let model_cfg = cfg.model_config(train.vocab.len(), train.answers.len(), raw_dim);
    let mut train_cfg = cfg.train_config();
    if !cfg.lr_grid.is_empty() {
        let (lr, _) = grid_search_lr(&model_cfg, &train, &val, &train_cfg, &cfg.lr_grid, cfg.grid_epochs)?;
        train_cfg.lr = lr;
    }

    create_dir(&cfg.out)?;
    let log = cfg.out.join("run.jsonl");
    write_file(&log, "")?;
    write_file(&cfg.out.join("config.txt"), cfg.dump())?;
    let mut model = SanModel::new(model_cfg)?;
    let reports = fit_with(&mut model, &train, Some(&val), &train_cfg, Some(&log), on_epoch)?;

    let checkpoint = cfg.checkpoint_path();
    let tag = model.tag();
    save_checkpoint(&checkpoint, &Checkpoint { model, vocab: train.vocab, answers: train.answers })?;
    Ok(TrainOutcome { tag, checkpoint, log, lr: train_cfg.lr, reports })
}

fn load_matching(cfg: &RunConfig, split: &str) -> Result<(Checkpoint, Dataset)> {
    let ck = load_checkpoint(&cfg.checkpoint_path())?;
    let ds = read_dataset(&DatasetLayout::new(&cfg.data_dir), split)?;
    if ck.vocab != ds.vocab || ck.answers != ds.answers {
        return Err(SanError::Vocab(format!("checkpoint vocabulary does not match dataset split {split:?}")));
    }
    Ok((ck, ds))
}

fn taxonomy(cfg: &RunConfig) -> Result<TaxonomyTree> {
    match &cfg.taxonomy {
        Some(p) => TaxonomyTree::read(p),
        None => TaxonomyTree::parse(ANSWER_TAXONOMY),
    }
}

/// Scores the checkpoint and writes `<out>/report.json`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let (ck, ds) = load_matching(cfg, &cfg.eval_split)?;
    let report = evaluate(&ck.model, &ds, &taxonomy(cfg)?)?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    Ok(report)
}

/// Splits `test-12` into `("test", 12)`.
pub fn parse_sample_id(id: &str) -> Result<(&str, usize)> {
    id.rsplit_once('-')
        .and_then(|(split, i)| Some((split, i.parse().ok()?)))
        .filter(|(split, _)| !split.is_empty())
        .ok_or_else(|| SanError::Resolution(format!("sample id {id:?} is not <split>-<index>")))
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceLayer {
    pub layer: usize,
    pub p: Vec<f64>,
    pub argmax: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceDump {
    pub sample: String,
    pub question: Vec<String>,
    pub answer: String,
    pub predicted: String,
    pub layers: Vec<TraceLayer>,
    pub p_ans: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttendOutcome {
    pub heatmaps: Vec<PathBuf>,
    pub trace_file: PathBuf,
    pub overlay: Option<String>,
    pub predicted: String,
    pub trace: AttentionTrace,
}

fn argmax(p: &[f64]) -> usize {
    predict_answer(p).unwrap_or(0)
}

/// Writes `<id>.layer<k>.pgm` per layer, `<id>.trace.json` and, when the
/// scene is known, `<id>.overlay.txt`.
pub fn cmd_attend(cfg: &RunConfig) -> Result<AttendOutcome> {
    let id = cfg.attend_sample.as_str();
    let (split, index) = parse_sample_id(id)?;
    let (ck, ds) = load_matching(cfg, split)?;
    let sample = ds
        .samples
        .get(index)
        .ok_or_else(|| SanError::Resolution(format!("unknown sample {id:?}: split has {} samples", ds.len())))?;
    let features = ds.features_of(sample)?;
    let (p_ans, trace) = ck.model.forward(features, &sample.tokens, sample.mask)?;
    let predicted = ds.answers.word(predict_answer(&p_ans)?)?.to_string();

    create_dir(&cfg.out)?;
    let g = features.grid_side();
    let sigma = cfg.attend_sigma.unwrap_or_else(|| default_sigma(g, cfg.attend_size));
    let scene = ds.scenes.get(&sample.scene);
    let mut heatmaps = Vec::new();
    let mut overlay = scene.map(|_| String::new());
    for (k, layer) in trace.layers.iter().enumerate() {
        let mut h = gaussian_blur(&upsample_attention(&layer.p, g, cfg.attend_size)?, sigma)?;
        h.layer = k + 1;
        let path = cfg.out.join(format!("{id}.layer{}.pgm", k + 1));
        export_pgm(&h, &path)?;
        heatmaps.push(path);
        if let (Some(text), Some(scene)) = (overlay.as_mut(), scene) {
            text.push_str(&overlay_ascii(&h, scene));
        }
    }
    if let Some(text) = &overlay {
        write_file(&cfg.out.join(format!("{id}.overlay.txt")), text)?;
    }
    let dump = TraceDump {
        sample: id.to_string(),
        question: ds.vocab.decode(&sample.tokens)?,
        answer: ds.answers.word(sample.answer)?.to_string(),
        predicted: predicted.clone(),
        layers: trace
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| TraceLayer { layer: k + 1, p: l.p.clone(), argmax: argmax(&l.p) })
            .collect(),
        p_ans,
    };
    let trace_file = cfg.out.join(format!("{id}.trace.json"));
    write_file(&trace_file, serde_json::to_string_pretty(&dump).expect("trace serializes") + "\n")?;
    Ok(AttendOutcome { heatmaps, trace_file, overlay, predicted, trace })
}
