//! End-to-end runs of the four commands on a tiny dataset.

use std::fs;
use std::path::Path;
use std::process::Command;

use san::cli::{cmd_attend, cmd_eval, cmd_gen_data, cmd_train, EXIT_CONFIG};
use san::config::RunConfig;
use san::data::{read_dataset, resolve, DatasetLayout};
use san::metrics::{evaluate, TaxonomyTree, ANSWER_TAXONOMY};
use san::model::{load_checkpoint, SanModel};
use san::SanError;

fn config(root: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    for kv in [
        "gen.train=48",
        "gen.val=12",
        "gen.test=24",
        "model.embed_dim=6",
        "model.hidden=8",
        "train.epochs=2",
        "train.batch_size=8",
        "attend.size=56",
    ] {
        cfg.apply_override(kv).unwrap();
    }
    cfg.seed = seed;
    cfg.data_dir = root.join("data");
    cfg.out = root.join("run");
    cfg
}

fn with_data(seed: u64) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), seed);
    cmd_gen_data(&RunConfig { out: cfg.data_dir.clone(), ..cfg.clone() }).unwrap();
    (dir, cfg)
}

#[test]
fn gen_data_writes_every_artifact_and_answers_resolve() {
    let (_dir, cfg) = with_data(3);
    let layout = DatasetLayout::new(&cfg.data_dir);
    for f in ["vocab.txt", "answers.txt", "manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
        assert!(cfg.data_dir.join(f).is_file(), "{f} missing");
    }
    let mut total = 0;
    for split in ["train", "val", "test"] {
        let ds = read_dataset(&layout, split).unwrap();
        for s in &ds.samples {
            let words = ds.vocab.decode(&s.tokens).unwrap();
            let g = resolve(&ds.scenes[&s.scene], &words).unwrap();
            assert_eq!(g.answer, ds.answers.word(s.answer).unwrap());
            assert!(cfg.data_dir.join("features").join(format!("{}.sanf", s.scene)).is_file());
        }
        total += ds.len();
    }
    assert_eq!(total, 48 + 12 + 24);
}

#[test]
fn gen_data_manifest_is_reproducible() {
    let (a, cfg_a) = with_data(5);
    let (_b, cfg_b) = with_data(5);
    let read = |c: &RunConfig| fs::read(c.data_dir.join("manifest.json")).unwrap();
    assert_eq!(read(&cfg_a), read(&cfg_b));
    let manifest: serde_json::Value = serde_json::from_slice(&read(&cfg_a)).unwrap();
    assert_eq!(manifest["seed"], 5);
    drop(a);
}

#[test]
fn zero_learning_rate_keeps_initial_parameters() {
    let (_dir, mut cfg) = with_data(1);
    cfg.train.lr = 0.0;
    let out = cmd_train(&cfg).unwrap();
    let ck = load_checkpoint(&out.checkpoint).unwrap();
    let fresh = SanModel::new(cfg.model_config(ck.vocab.len(), ck.answers.len(), cfg.generator.raw_dim)).unwrap();
    assert_eq!(ck.model.store.values(), fresh.store.values());
    assert_eq!(out.tag, "SAN(2, LSTM)");
}

#[test]
fn training_is_reproducible_byte_for_byte() {
    let (_a, cfg_a) = with_data(2);
    let (_b, cfg_b) = with_data(2);
    let a = cmd_train(&cfg_a).unwrap();
    let b = cmd_train(&cfg_b).unwrap();
    assert_eq!(fs::read(&a.checkpoint).unwrap(), fs::read(&b.checkpoint).unwrap());
    assert_eq!(fs::read(&a.log).unwrap(), fs::read(&b.log).unwrap());
    let log = fs::read_to_string(&a.log).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "mean_loss", "train_acc", "val_acc", "lr", "seed"] {
            assert!(v.get(key).is_some(), "{key} missing from {line}");
        }
    }
}

#[test]
fn dumped_config_reproduces_the_run() {
    let (_dir, cfg) = with_data(4);
    let again = RunConfig::parse(&cfg.dump()).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn eval_report_matches_the_shipped_schema() {
    let (_dir, cfg) = with_data(6);
    cmd_train(&cfg).unwrap();
    let report = cmd_eval(&cfg).unwrap();
    assert_eq!(report.count, 24);
    assert_eq!(report.per_type.values().map(|t| t.count).sum::<usize>(), report.count);

    let schema: serde_json::Value = serde_json::from_str(include_str!("../schemas/eval_report.schema.json")).unwrap();
    let validator = jsonschema::JSONSchema::compile(&schema).unwrap();
    let written: serde_json::Value = serde_json::from_slice(&fs::read(cfg.out.join("report.json")).unwrap()).unwrap();
    assert!(validator.is_valid(&written));
    assert!(!validator.is_valid(&serde_json::json!({ "count": 1 })));
}

#[test]
fn perfect_and_constant_predictors() {
    let (_dir, cfg) = with_data(7);
    let ds = read_dataset(&DatasetLayout::new(&cfg.data_dir), "test").unwrap();
    let tax = TaxonomyTree::parse(ANSWER_TAXONOMY).unwrap();

    let perfect = |_: &san::data::Dataset, s: &san::data::QaSample| Ok(s.answer);
    let r = evaluate(&perfect, &ds, &tax).unwrap();
    assert_eq!((r.accuracy, r.wups_0_9, r.wups_0_0), (1.0, 1.0, 1.0));
    assert!(r.per_type.values().all(|t| t.accuracy == 1.0));

    let mut counts = vec![0usize; ds.answers.len()];
    for s in &ds.samples {
        counts[s.answer] += 1;
    }
    let (majority, &hits) = counts.iter().enumerate().max_by_key(|&(i, c)| (c, std::cmp::Reverse(i))).unwrap();
    let constant = move |_: &san::data::Dataset, _: &san::data::QaSample| Ok(majority);
    let r = evaluate(&constant, &ds, &tax).unwrap();
    assert_eq!(r.accuracy, hits as f64 / ds.len() as f64);
}

#[test]
fn attend_writes_one_heatmap_per_layer() {
    let (_dir, mut cfg) = with_data(8);
    cmd_train(&cfg).unwrap();
    cfg.attend_sample = "test-3".into();
    let out = cmd_attend(&cfg).unwrap();
    assert_eq!(out.heatmaps.len(), 2);
    for path in &out.heatmaps {
        let (w, h, pixels) = san::viz::read_pgm(path).unwrap();
        assert_eq!((w, h, pixels.len()), (56, 56, 56 * 56));
    }
    let dump: serde_json::Value = serde_json::from_slice(&fs::read(&out.trace_file).unwrap()).unwrap();
    let layers = dump["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    for l in layers {
        let sum: f64 = l["p"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-6);
    }
    assert!(out.overlay.unwrap().contains('#'));

    cfg.attend_sample = "test-9999".into();
    assert!(matches!(cmd_attend(&cfg), Err(SanError::Resolution(_))));
}

#[test]
fn eval_rejects_a_checkpoint_from_another_vocabulary() {
    let (_dir, cfg) = with_data(9);
    cmd_train(&cfg).unwrap();
    let vocab = cfg.data_dir.join("vocab.txt");
    let mut text = fs::read_to_string(&vocab).unwrap();
    text.push_str("zebra\n");
    fs::write(&vocab, text).unwrap();
    assert!(matches!(cmd_eval(&cfg), Err(SanError::Vocab(_))));
}

#[test]
fn binary_reports_config_errors_with_exit_code_two() {
    let bin = env!("CARGO_BIN_EXE_san");
    let status = Command::new(bin).args(["train", "--set", "train.speed=3"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&status.stderr).contains("train.speed"));

    let dump = Command::new(bin).args(["eval", "--dump-config", "--seed", "11"]).output().unwrap();
    assert!(dump.status.success());
    let cfg = RunConfig::parse(&String::from_utf8(dump.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 11);
}
