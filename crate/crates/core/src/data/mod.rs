//! Synthetic grid-scene question answering data.

mod io;
mod question;
mod scene;

pub use io::{read_dataset, read_scenes, write_dataset, write_scenes, DatasetLayout, SampleRecord};
pub use question::{answer_words, generate_question, question_words, resolve, GeneratedQuestion, QType, NUMBER_WORDS};
pub use scene::{generate_scene, render_region_features, Color, Object, Scene, Shape, SEMANTIC_DIM};

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Result, SanError};
use crate::image::RegionFeatureMap;
use crate::question::{Vocab, PAD};

/// Closed answer vocabulary; answer ids index into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerVocab {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || index.insert(w.clone(), i).is_some() {
                return Err(SanError::Vocab(format!("empty or duplicate answer {w:?}")));
            }
        }
        Ok(AnswerVocab { words, index })
    }

    /// Colors, shapes and number words.
    pub fn standard() -> Self {
        Self::new(answer_words().into_iter().map(String::from).collect()).expect("distinct answers")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Result<&str> {
        self.words
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| SanError::Vocab(format!("answer id {id} outside {} answers", self.len())))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// The question vocabulary of the synthetic templates.
pub fn standard_vocab() -> Vocab {
    Vocab::from_tokens(question_words())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    pub scene: u32,
    /// Token ids, unpadded.
    pub tokens: Vec<usize>,
    /// Number of real tokens.
    pub mask: usize,
    pub answer: usize,
    pub qtype: QType,
}

/// One split: samples plus everything needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: Vocab,
    pub answers: AnswerVocab,
    pub samples: Vec<QaSample>,
    pub features: BTreeMap<u32, RegionFeatureMap>,
    /// Ground-truth scenes, when known (generated data always has them).
    pub scenes: BTreeMap<u32, Scene>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn features_of(&self, sample: &QaSample) -> Result<&RegionFeatureMap> {
        self.features
            .get(&sample.scene)
            .ok_or_else(|| SanError::Resolution(format!("no features for scene {}", sample.scene)))
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.samples.iter().map(|s| s.scene)
    }

    /// Keeps only samples of the given type.
    pub fn filter_qtype(&self, qtype: QType) -> Dataset {
        Dataset { samples: self.samples.iter().filter(|s| s.qtype == qtype).cloned().collect(), ..self.clone() }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.clone() }
    }

    /// Seeded shuffle into mini-batches; the last batch may be partial.
    pub fn batches(&self, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
        batch_indices(self.len(), batch_size, seed)?.into_iter().map(|idx| self.materialize(idx)).collect()
    }

    fn materialize(&self, indices: Vec<usize>) -> Result<Batch> {
        let first = self.features_of(&self.samples[indices[0]])?;
        let (m, d) = (first.regions(), first.raw_dim());
        let max_len = indices.iter().map(|&i| self.samples[i].tokens.len()).max().unwrap_or(0);
        let mut features = Vec::with_capacity(indices.len() * m * d);
        let mut tokens = Vec::with_capacity(indices.len());
        for &i in &indices {
            let s = &self.samples[i];
            let f = self.features_of(s)?;
            if (f.regions(), f.raw_dim()) != (m, d) {
                return Err(SanError::dim(
                    "batch",
                    format!("scene {} has {}x{} features", s.scene, f.regions(), f.raw_dim()),
                ));
            }
            features.extend_from_slice(f.features().data());
            let mut t = s.tokens.clone();
            t.resize(max_len, PAD);
            tokens.push(t);
        }
        Ok(Batch {
            masks: indices.iter().map(|&i| self.samples[i].mask).collect(),
            answers: indices.iter().map(|&i| self.samples[i].answer).collect(),
            qtypes: indices.iter().map(|&i| self.samples[i].qtype).collect(),
            features: Tensor::new(vec![indices.len(), m, d], features)?,
            tokens,
            indices,
        })
    }
}

/// A mini-batch: features `[B, m, d_raw]`, right-padded token rows, masks, answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub features: Tensor,
    pub tokens: Vec<Vec<usize>>,
    pub masks: Vec<usize>,
    pub answers: Vec<usize>,
    pub qtypes: Vec<QType>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn region_map(&self, b: usize) -> Result<RegionFeatureMap> {
        RegionFeatureMap::new(self.features.outer_slice(b))
    }
}

/// Shuffled partition of `0..n` into chunks of `batch_size`.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(SanError::contract("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub grid_side: usize,
    pub raw_dim: usize,
    pub noise: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub qtypes: Vec<QType>,
    pub questions_per_scene: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            grid_side: 7,
            raw_dim: 16,
            noise: 0.1,
            min_objects: 3,
            max_objects: 6,
            qtypes: QType::ALL.to_vec(),
            questions_per_scene: 1,
        }
    }
}

const MAX_SCENE_ATTEMPTS: usize = 10_000;

/// Generates `n_questions` samples over fresh scenes numbered from `first_scene`.
///
/// Each scene draws from its own RNG stream, so a scene depends only on
/// `(seed, scene id)`.
pub fn generate_dataset(cfg: &GeneratorConfig, n_questions: usize, first_scene: u32, seed: u64) -> Result<Dataset> {
    if cfg.qtypes.is_empty() || cfg.questions_per_scene == 0 {
        return Err(SanError::Config("need at least one question type and one question per scene".into()));
    }
    let vocab = standard_vocab();
    let answers = AnswerVocab::standard();
    let mut ds = Dataset { vocab, answers, samples: Vec::new(), features: BTreeMap::new(), scenes: BTreeMap::new() };

    let mut scene_id = first_scene;
    let mut misses = 0;
    while ds.samples.len() < n_questions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(scene_id));
        let scene = generate_scene(&mut rng, scene_id, cfg.grid_side, (cfg.min_objects, cfg.max_objects))?;
        let mut questions = Vec::new();
        for _ in 0..cfg.questions_per_scene {
            if ds.samples.len() + questions.len() >= n_questions {
                break;
            }
            let qtype = cfg.qtypes[rng.gen_range(0..cfg.qtypes.len())];
            if let Ok(q) = generate_question(&scene, qtype, &mut rng) {
                if !questions.iter().any(|p: &GeneratedQuestion| p.words == q.words) {
                    questions.push(q);
                }
            }
        }
        if questions.is_empty() {
            misses += 1;
            if misses > MAX_SCENE_ATTEMPTS {
                return Err(SanError::Generation(format!(
                    "no question of types {:?} after {MAX_SCENE_ATTEMPTS} scenes",
                    cfg.qtypes
                )));
            }
        } else {
            misses = 0;
            let features = render_region_features(&scene, cfg.raw_dim, cfg.noise, &mut rng)?;
            for q in questions {
                let tokens = ds.vocab.encode(&q.words);
                let answer = ds.answers.id(&q.answer).expect("generated answers are in the closed set");
                ds.samples.push(QaSample { scene: scene_id, mask: tokens.len(), tokens, answer, qtype: q.qtype });
            }
            ds.features.insert(scene_id, features);
            ds.scenes.insert(scene_id, scene);
        }
        scene_id = scene_id.checked_add(1).ok_or_else(|| SanError::Generation("scene ids exhausted".into()))?;
    }
    Ok(ds)
}

/// Train/validation/test splits over disjoint scene id ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn generate_splits(cfg: &GeneratorConfig, sizes: [usize; 3], seed: u64) -> Result<Splits> {
    let train = generate_dataset(cfg, sizes[0], 0, seed)?;
    let next = train.scenes.keys().next_back().map_or(0, |&id| id + 1);
    let val = generate_dataset(cfg, sizes[1], next, seed)?;
    let next = val.scenes.keys().next_back().map_or(next, |&id| id + 1);
    let test = generate_dataset(cfg, sizes[2], next, seed)?;
    Ok(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> GeneratorConfig {
        GeneratorConfig { qtypes: QType::ALL.to_vec(), ..Default::default() }
    }

    #[test]
    fn batches_partition_the_split() {
        let ds = generate_dataset(&small(), 5, 0, 1).unwrap();
        let b = ds.batches(2, 9).unwrap();
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        let mut all: Vec<usize> = b.iter().flat_map(|x| x.indices.clone()).collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert_eq!(ds.batches(2, 9).unwrap(), b);
        assert_eq!(b[0].features.shape(), &[2, 49, 16]);
    }

    #[test]
    fn batch_rows_are_padded_with_masks() {
        let ds = generate_dataset(&small(), 16, 0, 2).unwrap();
        for batch in ds.batches(8, 0).unwrap() {
            let width = batch.tokens[0].len();
            for (row, (&mask, &i)) in batch.tokens.iter().zip(batch.masks.iter().zip(&batch.indices)) {
                assert_eq!(row.len(), width);
                assert_eq!(&row[..mask], ds.samples[i].tokens.as_slice());
                assert!(row[mask..].iter().all(|&t| t == PAD));
            }
            let f = batch.region_map(1).unwrap();
            assert_eq!(&f, ds.features_of(&ds.samples[batch.indices[1]]).unwrap());
        }
    }

    #[test]
    fn zero_batch_is_rejected() {
        assert!(batch_indices(3, 0, 0).is_err());
    }

    #[test]
    fn splits_are_scene_disjoint_and_answers_check_out() {
        let s = generate_splits(&small(), [60, 20, 20], 5).unwrap();
        let ids = |d: &Dataset| d.scene_ids().collect::<BTreeSet<_>>();
        let (a, b, c) = (ids(&s.train), ids(&s.val), ids(&s.test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        for d in [&s.train, &s.val, &s.test] {
            for sample in &d.samples {
                let words = d.vocab.decode(&sample.tokens).unwrap();
                let r = resolve(&d.scenes[&sample.scene], &words).unwrap();
                assert_eq!(d.answers.id(&r.answer), Some(sample.answer));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small();
        assert_eq!(generate_dataset(&cfg, 30, 0, 3).unwrap(), generate_dataset(&cfg, 30, 0, 3).unwrap());
    }
}
