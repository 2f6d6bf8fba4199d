//! On-disk dataset layout.
//!
//! ```text
//! <root>/vocab.txt            one token per line, <pad> and <unk> first
//! <root>/answers.txt          one answer word per line
//! <root>/<split>.jsonl        {"scene": id, "q": [...], "a": word, "type": qtype}
//! <root>/<split>.scenes.jsonl ground-truth scenes (optional)
//! <root>/features/<id>.sanf   region features per scene
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnswerVocab, Dataset, QType, QaSample, Scene};
use crate::error::{Result, SanError};
use crate::image::RegionFeatureMap;
use crate::question::Vocab;

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub scene: u32,
    pub q: Vec<String>,
    pub a: String,
    #[serde(rename = "type")]
    pub qtype: QType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.txt")
    }

    pub fn answers(&self) -> PathBuf {
        self.root.join("answers.txt")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.jsonl"))
    }

    pub fn scenes(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.scenes.jsonl"))
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn feature_file(&self, scene: u32) -> PathBuf {
        self.features_dir().join(format!("{scene}.sanf"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SanError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SanError::io(path, e))
}

/// Writes the split, its feature files and the shared vocabularies.
pub fn write_dataset(layout: &DatasetLayout, split: &str, ds: &Dataset) -> Result<()> {
    let features_dir = layout.features_dir();
    fs::create_dir_all(&features_dir).map_err(|e| SanError::io(&features_dir, e))?;
    ds.vocab.write(&layout.vocab())?;
    write_text(&layout.answers(), &ds.answers.words().iter().map(|w| format!("{w}\n")).collect::<String>())?;

    let mut out = String::new();
    for s in &ds.samples {
        let record = SampleRecord {
            scene: s.scene,
            q: ds.vocab.decode(&s.tokens)?,
            a: ds.answers.word(s.answer)?.to_string(),
            qtype: s.qtype,
        };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    write_text(&layout.split(split), &out)?;
    for (&id, f) in &ds.features {
        f.write(&layout.feature_file(id))?;
    }
    if !ds.scenes.is_empty() {
        write_scenes(&layout.scenes(split), ds.scenes.values())?;
    }
    Ok(())
}

/// Reads a split; every referenced scene must have a feature file.
pub fn read_dataset(layout: &DatasetLayout, split: &str) -> Result<Dataset> {
    let vocab = Vocab::read(&layout.vocab())?;
    let answers = AnswerVocab::new(read_text(&layout.answers())?.lines().map(str::to_string).collect())?;
    let text = read_text(&layout.split(split))?;

    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| SanError::Parse { line: i + 1, msg };
        let r: SampleRecord = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        let mut tokens = Vec::with_capacity(r.q.len());
        for w in &r.q {
            tokens.push(vocab.get(w).ok_or_else(|| parse(format!("question word {w:?} not in vocab")))?);
        }
        let answer = answers.id(&r.a).ok_or_else(|| parse(format!("answer {:?} not in answer vocab", r.a)))?;
        samples.push(QaSample { scene: r.scene, mask: tokens.len(), tokens, answer, qtype: r.qtype });
    }

    let mut features = BTreeMap::new();
    for s in &samples {
        if features.contains_key(&s.scene) {
            continue;
        }
        let path = layout.feature_file(s.scene);
        if !path.exists() {
            return Err(SanError::Resolution(format!("scene {} has no feature file at {}", s.scene, path.display())));
        }
        features.insert(s.scene, RegionFeatureMap::read(&path)?);
    }

    let scenes_path = layout.scenes(split);
    let scenes = if scenes_path.exists() {
        read_scenes(&scenes_path)?.into_iter().map(|s| (s.id, s)).collect()
    } else {
        BTreeMap::new()
    };
    Ok(Dataset { vocab, answers, samples, features, scenes })
}

pub fn write_scenes<'s>(path: &Path, scenes: impl IntoIterator<Item = &'s Scene>) -> Result<()> {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&serde_json::to_string(s).expect("scenes serialize"));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SanError::Parse { line: i + 1, msg: e.to_string() }))
        .collect()
}
