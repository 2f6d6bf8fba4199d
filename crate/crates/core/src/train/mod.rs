//! Loss, regularisation and mini-batch SGD with momentum.

mod dropout;
mod optim;

pub use dropout::{dropout, Mode};
pub use optim::{clip_gradients, global_norm, nll_loss, sgd_momentum_step, OptimizerState};

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{batch_indices, Dataset};
use crate::error::{Result, SanError};
use crate::metrics::{accuracy, Predictor};
use crate::model::{predict_answer, ModelConfig, SanModel};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Global-norm clip threshold `τ`.
    pub clip: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.1, momentum: 0.9, batch_size: 32, clip: 5.0, dropout: 0.5, epochs: 20, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SanError::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.clip > 0.0) {
            return Err(SanError::Config(format!("clip must be positive, got {}", self.clip)));
        }
        if self.batch_size == 0 {
            return Err(SanError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SanError::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(SanError::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub lr: f64,
    pub seed: u64,
}

/// Independent RNG stream `stream` of `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const DROPOUT_STREAM: u64 = 1 << 32;

struct SampleOutcome {
    loss: f64,
    correct: bool,
    grads: Vec<Tensor>,
}

fn sample_step(model: &SanModel, ds: &Dataset, index: usize, rate: f64, dropout_seed: u64) -> Result<SampleOutcome> {
    let s = &ds.samples[index];
    let features = ds.features_of(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut mode = Mode::Train { rate, rng: &mut rng };
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true);
    let vars = model.forward_on_tape(&mut tape, &bound, features, &s.tokens, s.mask, &mut mode)?;
    let loss = nll_loss(&mut tape, vars.logits, s.answer)?;
    let correct = predict_answer(tape.value(vars.p_ans).data())? == s.answer;
    let loss_value = tape.value(loss).item();
    tape.backward(loss)?;
    Ok(SampleOutcome { loss: loss_value, correct, grads: bound.gradients(&mut tape) })
}

/// Mean loss and batch-mean gradient over `indices`, reduced in index order.
fn batch_gradient(
    model: &SanModel,
    ds: &Dataset,
    indices: &[usize],
    rate: f64,
    seeds: &[u64],
) -> Result<(Vec<SampleOutcome>, Vec<Tensor>)> {
    let outcomes: Vec<SampleOutcome> = indices
        .par_iter()
        .zip(seeds)
        .map(|(&i, &seed)| sample_step(model, ds, i, rate, seed))
        .collect::<Result<_>>()?;
    let mut total = model.store.zeros_like();
    for o in &outcomes {
        for (t, g) in total.iter_mut().zip(&o.grads) {
            t.add_assign(g);
        }
    }
    let inv = 1.0 / indices.len() as f64;
    for t in &mut total {
        t.scale_in_place(inv);
    }
    Ok((outcomes, total))
}

/// One pass over `train` in seeded mini-batches.
pub fn train_epoch(
    model: &mut SanModel,
    train: &Dataset,
    cfg: &TrainConfig,
    state: &mut OptimizerState,
    epoch: usize,
) -> Result<EpochReport> {
    if train.is_empty() {
        return Err(SanError::contract("cannot train on an empty split"));
    }
    let order = batch_indices(train.len(), cfg.batch_size, stream_rng(cfg.seed, epoch as u64).next_u64())?;
    let mut dropout_rng = stream_rng(cfg.seed, DROPOUT_STREAM + epoch as u64);
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for indices in order {
        let seeds: Vec<u64> = indices.iter().map(|_| dropout_rng.next_u64()).collect();
        let (outcomes, mut grads) = batch_gradient(model, train, &indices, cfg.dropout, &seeds)?;
        for o in &outcomes {
            loss_sum += o.loss;
            correct += usize::from(o.correct);
        }
        clip_gradients(&mut grads, cfg.clip)?;
        sgd_momentum_step(model.store.values_mut(), &grads, state, cfg.lr, cfg.momentum)?;
    }
    let mean_loss = loss_sum / train.len() as f64;
    if !mean_loss.is_finite() {
        return Err(SanError::Numeric { op: "train_epoch" });
    }
    Ok(EpochReport {
        epoch,
        mean_loss,
        train_acc: correct as f64 / train.len() as f64,
        val_acc: None,
        lr: cfg.lr,
        seed: cfg.seed,
    })
}

/// Eval-mode accuracy of `model` on `ds`.
pub fn evaluate_accuracy(model: &SanModel, ds: &Dataset) -> Result<f64> {
    let preds = model.predict_all(ds)?;
    let labels: Vec<usize> = ds.samples.iter().map(|s| s.answer).collect();
    accuracy(&preds, &labels)
}

/// Eval-mode mean loss of `model` on `ds`.
pub fn evaluate_loss(model: &SanModel, ds: &Dataset) -> Result<f64> {
    let losses: Vec<f64> = ds
        .samples
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, false);
            let vars =
                model.forward_on_tape(&mut tape, &bound, ds.features_of(s)?, &s.tokens, s.mask, &mut Mode::Eval)?;
            let loss = nll_loss(&mut tape, vars.logits, s.answer)?;
            Ok(tape.value(loss).item())
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Runs `cfg.epochs` epochs, appending each report to `log` when given.
pub fn fit(
    model: &mut SanModel,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    log: Option<&Path>,
) -> Result<Vec<EpochReport>> {
    fit_with(model, train, val, cfg, log, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    model: &mut SanModel,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    log: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    let mut state = OptimizerState::new(model.store.values());
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut report = train_epoch(model, train, cfg, &mut state, epoch)?;
        if let Some(v) = val.filter(|v| !v.is_empty()) {
            report.val_acc = Some(evaluate_accuracy(model, v)?);
        }
        if let Some(path) = log {
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| SanError::io(path, e))?;
            let line = serde_json::to_string(&report).expect("reports serialize");
            writeln!(f, "{line}").map_err(|e| SanError::io(path, e))?;
        }
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}

/// Largest relative error between the tape gradient and central
/// differences, for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub numel: usize,
    pub max_rel_error: f64,
}

/// Eval-mode mean NLL over `indices`, with parameters read from `model`.
pub fn batch_loss(model: &SanModel, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        let s = &ds.samples[i];
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, false);
        let vars = model.forward_on_tape(&mut tape, &bound, ds.features_of(s)?, &s.tokens, s.mask, &mut Mode::Eval)?;
        let loss = nll_loss(&mut tape, vars.logits, s.answer)?;
        total += tape.value(loss).item();
    }
    Ok(total / indices.len() as f64)
}

/// Checks every parameter gradient of the eval-mode mean loss over
/// `indices` against central differences with the given step.
pub fn check_gradients(model: &SanModel, ds: &Dataset, indices: &[usize], step: f64) -> Result<Vec<ParamCheck>> {
    if indices.is_empty() || !(step > 0.0) {
        return Err(SanError::contract("gradient check needs samples and a positive step"));
    }
    let mut analytic = model.store.zeros_like();
    for &i in indices {
        let s = &ds.samples[i];
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, true);
        let vars = model.forward_on_tape(&mut tape, &bound, ds.features_of(s)?, &s.tokens, s.mask, &mut Mode::Eval)?;
        let loss = nll_loss(&mut tape, vars.logits, s.answer)?;
        tape.backward(loss)?;
        for (a, g) in analytic.iter_mut().zip(bound.gradients(&mut tape)) {
            a.add_assign(&g);
        }
    }
    let inv = 1.0 / indices.len() as f64;
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(analytic.len());
    for (p, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..grad.numel() {
            let original = probe.store.values()[p].data()[j];
            probe.store.values_mut()[p].data_mut()[j] = original + step;
            let plus = batch_loss(&probe, ds, indices)?;
            probe.store.values_mut()[p].data_mut()[j] = original - step;
            let minus = batch_loss(&probe, ds, indices)?;
            probe.store.values_mut()[p].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(crate::autodiff::relative_error(grad.data()[j] * inv, numeric));
        }
        let id = model.store.ids().nth(p).expect("parameter index in range");
        out.push(ParamCheck { name: model.store.name(id).to_string(), numel: grad.numel(), max_rel_error: worst });
    }
    Ok(out)
}

/// Outcome of one learning-rate candidate; `None` when training diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct LrTrial {
    pub lr: f64,
    pub val_acc: Option<f64>,
}

/// Trains a fresh model per candidate and returns the lr with the best
/// validation accuracy; ties go to the smaller lr.
pub fn grid_search_lr(
    model_cfg: &ModelConfig,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    candidates: &[f64],
    budget_epochs: usize,
) -> Result<(f64, Vec<LrTrial>)> {
    if candidates.is_empty() {
        return Err(SanError::Search("no learning-rate candidates".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut trials = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64)> = None;
    for lr in sorted {
        let mut model = SanModel::new(model_cfg.clone())?;
        let run_cfg = TrainConfig { lr, epochs: budget_epochs, ..cfg.clone() };
        let val_acc = match fit(&mut model, train, None, &run_cfg, None) {
            Ok(_) => Some(evaluate_accuracy(&model, val)?),
            Err(SanError::Numeric { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(acc) = val_acc {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((lr, acc));
            }
        }
        trials.push(LrTrial { lr, val_acc });
    }
    let (lr, _) = best.ok_or_else(|| SanError::Search("every learning-rate candidate diverged".into()))?;
    Ok((lr, trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, GeneratorConfig, QType};
    use crate::question::EncoderKind;

    fn tiny(n: usize) -> (Dataset, ModelConfig) {
        let gen = GeneratorConfig {
            grid_side: 3,
            raw_dim: 12,
            min_objects: 2,
            max_objects: 4,
            qtypes: vec![QType::OneHop],
            ..Default::default()
        };
        let ds = generate_dataset(&gen, n, 0, 1).unwrap();
        let cfg = ModelConfig {
            encoder: EncoderKind::Lstm,
            layers: 1,
            vocab_size: ds.vocab.len(),
            answer_count: ds.answers.len(),
            raw_dim: 12,
            embed_dim: 6,
            hidden: 8,
            init_seed: 2,
            ..Default::default()
        };
        (ds, cfg)
    }

    #[test]
    fn zero_lr_is_pure_evaluation() {
        let (ds, mcfg) = tiny(10);
        let mut model = SanModel::new(mcfg).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { lr: 0.0, dropout: 0.0, batch_size: 4, epochs: 1, ..Default::default() };
        let mut state = OptimizerState::new(model.store.values());
        let report = train_epoch(&mut model, &ds, &cfg, &mut state, 0).unwrap();
        assert_eq!(model, before);
        let eval = evaluate_loss(&before, &ds).unwrap();
        assert!((report.mean_loss - eval).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (ds, mcfg) = tiny(12);
        let cfg = TrainConfig { lr: 0.05, batch_size: 5, epochs: 2, seed: 4, ..Default::default() };
        let run = || {
            let mut m = SanModel::new(mcfg.clone()).unwrap();
            let r = fit(&mut m, &ds, Some(&ds), &cfg, None).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn run_log_has_one_line_per_epoch() {
        let (ds, mcfg) = tiny(6);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("run.jsonl");
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..Default::default() };
        let mut m = SanModel::new(mcfg).unwrap();
        let reports = fit(&mut m, &ds, None, &cfg, Some(&log)).unwrap();
        let lines: Vec<EpochReport> =
            std::fs::read_to_string(&log).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines, reports);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { clip: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn grid_search_prefers_a_learning_lr() {
        let (ds, mcfg) = tiny(24);
        let cfg = TrainConfig { dropout: 0.0, batch_size: 8, ..Default::default() };
        let (lr, trials) = grid_search_lr(&mcfg, &ds, &ds, &cfg, &[0.3], 1).unwrap();
        assert_eq!((lr, trials.len()), (0.3, 1));
        let (lr, trials) = grid_search_lr(&mcfg, &ds, &ds, &cfg, &[0.3, 0.0], 15).unwrap();
        assert_eq!(lr, 0.3, "{trials:?}");
        assert!(grid_search_lr(&mcfg, &ds, &ds, &cfg, &[], 1).is_err());
    }
}
