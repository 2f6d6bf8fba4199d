//! Accuracy, the ten-annotator consensus score and WUPS.

mod wups;

pub use wups::{wu_palmer, wups_score, wups_score_with, BelowThreshold, TaxonomyTree, WupsOptions};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, QaSample};
use crate::error::{Result, SanError};
use crate::model::SanModel;

/// Taxonomy over the synthetic answer words.
pub const ANSWER_TAXONOMY: &str = include_str!("../../assets/answers.tsv");
/// Four-node tree used in examples and tests.
pub const TOY_TAXONOMY: &str = include_str!("../../assets/toy_taxonomy.tsv");

/// Fraction of exact matches.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(SanError::contract(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `min(#matching labels / 3, 1)` over exactly ten annotator answers,
/// compared after lowercasing and trimming.
pub fn vqa_consensus(pred: &str, human_labels: &[impl AsRef<str>]) -> Result<f64> {
    if human_labels.len() != 10 {
        return Err(SanError::contract(format!("expected 10 human labels, got {}", human_labels.len())));
    }
    let canon = |s: &str| s.trim().to_lowercase();
    let p = canon(pred);
    let matches = human_labels.iter().filter(|l| canon(l.as_ref()) == p).count();
    Ok((matches as f64 / 3.0).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub accuracy: f64,
    pub per_type: BTreeMap<String, TypeScore>,
    pub wups_0_9: f64,
    pub wups_0_0: f64,
}

impl EvalReport {
    /// Table with one row per question type.
    pub fn render(&self) -> String {
        let mut out = format!("{:<10} {:>6} {:>9}\n", "type", "count", "accuracy");
        for (t, s) in &self.per_type {
            out.push_str(&format!("{:<10} {:>6} {:>9.4}\n", t, s.count, s.accuracy));
        }
        out.push_str(&format!("{:<10} {:>6} {:>9.4}\n", "overall", self.count, self.accuracy));
        out.push_str(&format!("WUPS@0.9 {:.4}  WUPS@0.0 {:.4}\n", self.wups_0_9, self.wups_0_0));
        out
    }
}

/// Anything that maps a sample to an answer id.
pub trait Predictor: Sync {
    fn predict_sample(&self, ds: &Dataset, sample: &QaSample) -> Result<usize>;

    fn predict_all(&self, ds: &Dataset) -> Result<Vec<usize>> {
        ds.samples.par_iter().map(|s| self.predict_sample(ds, s)).collect()
    }
}

impl Predictor for SanModel {
    fn predict_sample(&self, ds: &Dataset, sample: &QaSample) -> Result<usize> {
        self.predict(ds.features_of(sample)?, &sample.tokens, sample.mask)
    }
}

impl<F: Fn(&Dataset, &QaSample) -> Result<usize> + Sync> Predictor for F {
    fn predict_sample(&self, ds: &Dataset, sample: &QaSample) -> Result<usize> {
        self(ds, sample)
    }
}

/// Scores `predictor` on `ds`. WUPS words missing from `tax` fall back to exact match.
pub fn evaluate(predictor: &impl Predictor, ds: &Dataset, tax: &TaxonomyTree) -> Result<EvalReport> {
    let preds = predictor.predict_all(ds)?;
    report_from_predictions(&preds, ds, tax)
}

pub fn report_from_predictions(preds: &[usize], ds: &Dataset, tax: &TaxonomyTree) -> Result<EvalReport> {
    let labels: Vec<usize> = ds.samples.iter().map(|s| s.answer).collect();
    let overall = accuracy(preds, &labels)?;

    let mut per_type: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ((p, l), s) in preds.iter().zip(&labels).zip(&ds.samples) {
        let e = per_type.entry(s.qtype.as_str().to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(p == l);
    }
    let pred_words = preds.iter().map(|&p| ds.answers.word(p)).collect::<Result<Vec<_>>>()?;
    let label_words = labels.iter().map(|&l| ds.answers.word(l)).collect::<Result<Vec<_>>>()?;
    let wups = |threshold| {
        wups_score_with(
            &pred_words,
            &label_words,
            tax,
            WupsOptions { threshold, exact_fallback: true, ..Default::default() },
        )
    };
    Ok(EvalReport {
        count: preds.len(),
        accuracy: overall,
        per_type: per_type
            .into_iter()
            .map(|(k, (n, hit))| (k, TypeScore { count: n, accuracy: hit as f64 / n as f64 }))
            .collect(),
        wups_0_9: wups(0.9)?,
        wups_0_0: wups(0.0)?,
    })
}
