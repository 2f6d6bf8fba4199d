//! Question templates, the generator, and an independent answer resolver.
//!
//! Templates:
//!
//! - one hop: `what color is the <shape>`
//! - two hop: `what color is the object next to the <shape>` and
//!   `what shape is the object next to the <color> <shape>`
//! - count: `how many <color> objects`
//!
//! Referents are unique in their scene, and two-hop referents have exactly one
//! occupied 4-neighbour.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::{Color, Scene, Shape};
use crate::error::{Result, SanError};

pub const NUMBER_WORDS: [&str; 7] = ["zero", "one", "two", "three", "four", "five", "six"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    OneHop,
    TwoHop,
    Count,
}

impl QType {
    pub const ALL: [QType; 3] = [QType::OneHop, QType::TwoHop, QType::Count];

    pub fn as_str(self) -> &'static str {
        match self {
            QType::OneHop => "one_hop",
            QType::TwoHop => "two_hop",
            QType::Count => "count",
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QType {
    type Err = SanError;

    fn from_str(s: &str) -> Result<Self> {
        QType::ALL
            .into_iter()
            .find(|q| q.as_str() == s.trim())
            .ok_or_else(|| SanError::Config(format!("unknown question type {s:?}")))
    }
}

/// A generated question in word form, with its answer and the cell holding
/// the answer's evidence (none for counting).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedQuestion {
    pub words: Vec<String>,
    pub answer: String,
    pub qtype: QType,
    /// Cell of the object the question names.
    pub referent_cell: Option<usize>,
    /// Cell holding the answered attribute.
    pub evidence_cell: Option<usize>,
}

/// Every word the templates can emit.
pub fn question_words() -> Vec<&'static str> {
    let mut w = vec!["what", "color", "shape", "is", "the", "object", "next", "to", "how", "many", "objects"];
    w.extend(Shape::ALL.map(Shape::word));
    w.extend(Color::ALL.map(Color::word));
    w
}

/// The closed answer set: colors, shapes, number words.
pub fn answer_words() -> Vec<&'static str> {
    let mut w: Vec<&str> = Color::ALL.map(Color::word).to_vec();
    w.extend(Shape::ALL.map(Shape::word));
    w.extend(NUMBER_WORDS);
    w
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn sole_neighbor(scene: &Scene, cell: usize) -> Option<usize> {
    match scene.occupied_neighbors(cell).as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}

/// Draws a question of `qtype` about `scene`, then re-derives its answer with
/// [`resolve`] and fails if the two disagree.
pub fn generate_question(scene: &Scene, qtype: QType, rng: &mut impl Rng) -> Result<GeneratedQuestion> {
    let objects: Vec<_> = scene.objects().collect();
    let shape_unique = |s: Shape| objects.iter().filter(|(_, o)| o.shape == s).count() == 1;
    let pair_unique = |s: Shape, c: Color| objects.iter().filter(|(_, o)| o.shape == s && o.color == c).count() == 1;

    let q = match qtype {
        QType::OneHop => {
            let candidates: Vec<_> = objects.iter().filter(|(_, o)| shape_unique(o.shape)).collect();
            let &&(cell, obj) =
                candidates.choose(rng).ok_or_else(|| SanError::Generation("no uniquely shaped object".into()))?;
            GeneratedQuestion {
                words: words(&format!("what color is the {}", obj.shape.word())),
                answer: obj.color.word().into(),
                qtype,
                referent_cell: Some(cell),
                evidence_cell: Some(cell),
            }
        }
        QType::TwoHop => {
            // (referent cell, neighbour cell, asks for shape)
            let mut candidates = Vec::new();
            for &(cell, obj) in &objects {
                let Some(n) = sole_neighbor(scene, cell) else { continue };
                if shape_unique(obj.shape) {
                    candidates.push((cell, n, false));
                }
                if pair_unique(obj.shape, obj.color) {
                    candidates.push((cell, n, true));
                }
            }
            let &(cell, n, ask_shape) = candidates
                .choose(rng)
                .ok_or_else(|| SanError::Generation("no unique referent with a single neighbour".into()))?;
            let obj = scene.cells[cell].expect("referent cell is occupied");
            let other = scene.cells[n].expect("neighbour cell is occupied");
            debug_assert_ne!(cell, n);
            let (text, answer) = if ask_shape {
                (
                    format!("what shape is the object next to the {} {}", obj.color.word(), obj.shape.word()),
                    other.shape.word(),
                )
            } else {
                (format!("what color is the object next to the {}", obj.shape.word()), other.color.word())
            };
            GeneratedQuestion {
                words: words(&text),
                answer: answer.into(),
                qtype,
                referent_cell: Some(cell),
                evidence_cell: Some(n),
            }
        }
        QType::Count => {
            let color = Color::ALL[rng.gen_range(0..4)];
            let n = objects.iter().filter(|(_, o)| o.color == color).count();
            let word = NUMBER_WORDS
                .get(n)
                .ok_or_else(|| SanError::Generation(format!("{n} {} objects exceed the number words", color.word())))?;
            GeneratedQuestion {
                words: words(&format!("how many {} objects", color.word())),
                answer: (*word).into(),
                qtype,
                referent_cell: None,
                evidence_cell: None,
            }
        }
    };

    let resolved = resolve(scene, &q.words)?;
    if resolved.answer != q.answer
        || resolved.qtype != q.qtype
        || resolved.evidence_cell != q.evidence_cell
        || resolved.referent_cell != q.referent_cell
    {
        return Err(SanError::Generation(format!(
            "resolver disagrees on {:?}: generated {}, resolved {}",
            q.words.join(" "),
            q.answer,
            resolved.answer
        )));
    }
    Ok(q)
}

/// Parses a question from its words and answers it from the scene graph.
///
/// Written separately from the generator so the two act as mutual checks.
pub fn resolve(scene: &Scene, question: &[impl AsRef<str>]) -> Result<GeneratedQuestion> {
    let w: Vec<&str> = question.iter().map(AsRef::as_ref).collect();
    let unresolvable = |why: &str| SanError::Generation(format!("cannot resolve {:?}: {why}", w.join(" ")));

    let find = |pred: &dyn Fn(Shape, Color) -> bool| -> Vec<usize> {
        (0..scene.cells.len()).filter(|&i| matches!(scene.cells[i], Some(o) if pred(o.shape, o.color))).collect()
    };
    let unique = |cells: Vec<usize>| -> Result<usize> {
        match cells.as_slice() {
            [c] => Ok(*c),
            [] => Err(unresolvable("referent absent")),
            _ => Err(unresolvable("referent ambiguous")),
        }
    };
    let only_neighbor = |cell: usize| -> Result<usize> {
        let around: Vec<usize> = scene.neighbors(cell).into_iter().filter(|&n| scene.cells[n].is_some()).collect();
        match around.as_slice() {
            [n] => Ok(*n),
            _ => Err(unresolvable("referent does not have exactly one neighbour")),
        }
    };
    let owned = |a: &str, qtype, referent, evidence| GeneratedQuestion {
        words: w.iter().map(|s| s.to_string()).collect(),
        answer: a.to_string(),
        qtype,
        referent_cell: referent,
        evidence_cell: evidence,
    };

    match w.as_slice() {
        ["what", "color", "is", "the", shape] => {
            let s = Shape::from_word(shape).ok_or_else(|| unresolvable("unknown shape"))?;
            let cell = unique(find(&|sh, _| sh == s))?;
            let o = scene.cells[cell].expect("found occupied");
            Ok(owned(o.color.word(), QType::OneHop, Some(cell), Some(cell)))
        }
        ["what", "color", "is", "the", "object", "next", "to", "the", shape] => {
            let s = Shape::from_word(shape).ok_or_else(|| unresolvable("unknown shape"))?;
            let cell = unique(find(&|sh, _| sh == s))?;
            let n = only_neighbor(cell)?;
            Ok(owned(scene.cells[n].expect("occupied").color.word(), QType::TwoHop, Some(cell), Some(n)))
        }
        ["what", "shape", "is", "the", "object", "next", "to", "the", color, shape] => {
            let s = Shape::from_word(shape).ok_or_else(|| unresolvable("unknown shape"))?;
            let c = Color::from_word(color).ok_or_else(|| unresolvable("unknown color"))?;
            let cell = unique(find(&|sh, co| sh == s && co == c))?;
            let n = only_neighbor(cell)?;
            Ok(owned(scene.cells[n].expect("occupied").shape.word(), QType::TwoHop, Some(cell), Some(n)))
        }
        ["how", "many", color, "objects"] => {
            let c = Color::from_word(color).ok_or_else(|| unresolvable("unknown color"))?;
            let n = find(&|_, co| co == c).len();
            let word = NUMBER_WORDS.get(n).ok_or_else(|| unresolvable("count too large"))?;
            Ok(owned(word, QType::Count, None, None))
        }
        _ => Err(unresolvable("no matching template")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::scene::{generate_scene, Object};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obj(shape: Shape, color: Color) -> Object {
        Object { shape, color }
    }

    #[test]
    fn one_hop_reads_referent_color() {
        let mut s = Scene::empty(0, 3);
        s.place(0, 0, obj(Shape::Circle, Color::Red));
        s.place(2, 2, obj(Shape::Square, Color::Blue));
        let r = resolve(&s, &words("what color is the circle")).unwrap();
        assert_eq!(r.answer, "red");
        assert_eq!(r.evidence_cell, Some(0));
    }

    #[test]
    fn two_hop_reads_the_sole_neighbour() {
        let mut s = Scene::empty(0, 4);
        s.place(1, 1, obj(Shape::Square, Color::Green));
        s.place(2, 1, obj(Shape::Star, Color::Blue));
        s.place(3, 3, obj(Shape::Circle, Color::Red));
        let r = resolve(&s, &words("what color is the object next to the square")).unwrap();
        assert_eq!(r.answer, "blue");
        assert_eq!(r.evidence_cell, Some(6));
        let r = resolve(&s, &words("what shape is the object next to the green square")).unwrap();
        assert_eq!(r.answer, "star");
    }

    #[test]
    fn count_of_absent_color_is_zero() {
        let mut s = Scene::empty(0, 3);
        s.place(0, 0, obj(Shape::Circle, Color::Red));
        s.place(1, 0, obj(Shape::Star, Color::Red));
        assert_eq!(resolve(&s, &words("how many green objects")).unwrap().answer, "zero");
        assert_eq!(resolve(&s, &words("how many red objects")).unwrap().answer, "two");
    }

    #[test]
    fn ambiguous_referent_is_rejected() {
        let mut s = Scene::empty(0, 3);
        s.place(0, 0, obj(Shape::Circle, Color::Red));
        s.place(2, 2, obj(Shape::Circle, Color::Blue));
        assert!(resolve(&s, &words("what color is the circle")).is_err());
        assert!(generate_question(&s, QType::OneHop, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn generator_agrees_with_resolver_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut made = [0usize; 3];
        for i in 0..2000 {
            let s = generate_scene(&mut rng, i, 7, (3, 8)).unwrap();
            for (k, qt) in QType::ALL.into_iter().enumerate() {
                if let Ok(q) = generate_question(&s, qt, &mut rng) {
                    made[k] += 1;
                    let r = resolve(&s, &q.words).unwrap();
                    assert_eq!(r.answer, q.answer);
                    if qt == QType::TwoHop {
                        // the answered attribute lives in a different, adjacent cell
                        let (referent, evidence) = (q.referent_cell.unwrap(), q.evidence_cell.unwrap());
                        assert_ne!(referent, evidence);
                        assert!(s.neighbors(referent).contains(&evidence));
                    }
                }
            }
        }
        assert!(made.iter().all(|&n| n > 300), "{made:?}");
    }

    #[test]
    fn answers_cover_all_templates() {
        let answers = answer_words();
        assert_eq!(answers.len(), 15);
        for w in ["red", "star", "zero", "six"] {
            assert!(answers.contains(&w));
        }
    }
}
