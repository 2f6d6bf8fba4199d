use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, SanError};

/// A rooted word tree read from `child<TAB>parent` lines. `depth(root) = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyTree {
    words: Vec<String>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TaxonomyTree {
    pub fn parse(text: &str) -> Result<Self> {
        let mut words: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut intern = |w: &str, words: &mut Vec<String>, parent: &mut Vec<Option<usize>>| {
            *index.entry(w.to_string()).or_insert_with(|| {
                words.push(w.to_string());
                parent.push(None);
                words.len() - 1
            })
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (child, par) = line
                .split_once('\t')
                .map(|(c, p)| (c.trim(), p.trim()))
                .filter(|(c, p)| !c.is_empty() && !p.is_empty())
                .ok_or_else(|| SanError::Taxonomy(format!("line {}: expected child<TAB>parent", i + 1)))?;
            let c = intern(child, &mut words, &mut parent);
            let p = intern(par, &mut words, &mut parent);
            if parent[c].is_some() {
                return Err(SanError::Taxonomy(format!("line {}: {child:?} has two parents", i + 1)));
            }
            parent[c] = Some(p);
        }
        let roots: Vec<&str> = (0..words.len()).filter(|&i| parent[i].is_none()).map(|i| words[i].as_str()).collect();
        if roots.len() != 1 {
            return Err(SanError::Taxonomy(format!("expected exactly one root, found {roots:?}")));
        }
        let mut depth = vec![0; words.len()];
        for (i, d) in depth.iter_mut().enumerate() {
            let mut node = i;
            let mut steps = 1;
            while let Some(p) = parent[node] {
                node = p;
                steps += 1;
                if steps > words.len() {
                    return Err(SanError::Taxonomy(format!("cycle through {:?}", words[i])));
                }
            }
            *d = steps;
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(TaxonomyTree { words, parent, depth, index })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| SanError::io(path, e))?)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn node(&self, word: &str) -> Result<usize> {
        self.index.get(word).copied().ok_or_else(|| SanError::Taxonomy(format!("word {word:?} not in taxonomy")))
    }

    pub fn depth(&self, word: &str) -> Result<usize> {
        Ok(self.depth[self.node(word)?])
    }

    pub fn lowest_common_ancestor(&self, a: &str, b: &str) -> Result<&str> {
        let (mut x, mut y) = (self.node(a)?, self.node(b)?);
        while self.depth[x] > self.depth[y] {
            x = self.parent[x].expect("deeper node has a parent");
        }
        while self.depth[y] > self.depth[x] {
            y = self.parent[y].expect("deeper node has a parent");
        }
        while x != y {
            x = self.parent[x].expect("non-root");
            y = self.parent[y].expect("non-root");
        }
        Ok(&self.words[x])
    }
}

/// `2·depth(lca) / (depth(a) + depth(b))`.
pub fn wu_palmer(a: &str, b: &str, tax: &TaxonomyTree) -> Result<f64> {
    let lca = tax.lowest_common_ancestor(a, b)?;
    Ok(2.0 * tax.depth(lca)? as f64 / (tax.depth(a)? + tax.depth(b)?) as f64)
}

/// What happens to a similarity below the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BelowThreshold {
    /// Contributes 0.
    #[default]
    Zero,
    /// Contributes `0.1 · sim`.
    DownWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WupsOptions {
    pub threshold: f64,
    pub below: BelowThreshold,
    /// Score words missing from the taxonomy by exact match instead of failing.
    pub exact_fallback: bool,
}

/// Mean thresholded Wu-Palmer similarity with strict zeroing.
pub fn wups_score(
    preds: &[impl AsRef<str>],
    labels: &[impl AsRef<str>],
    tax: &TaxonomyTree,
    threshold: f64,
) -> Result<f64> {
    wups_score_with(preds, labels, tax, WupsOptions { threshold, ..Default::default() })
}

pub fn wups_score_with(
    preds: &[impl AsRef<str>],
    labels: &[impl AsRef<str>],
    tax: &TaxonomyTree,
    opts: WupsOptions,
) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(SanError::contract(format!("{} predictions vs {} labels", preds.len(), labels.len())));
    }
    let mut total = 0.0;
    for (p, l) in preds.iter().zip(labels) {
        let (p, l) = (p.as_ref(), l.as_ref());
        let sim = if opts.exact_fallback && !(tax.contains(p) && tax.contains(l)) {
            if p == l {
                1.0
            } else {
                0.0
            }
        } else {
            wu_palmer(p, l, tax)?
        };
        total += if sim >= opts.threshold {
            sim
        } else {
            match opts.below {
                BelowThreshold::Zero => 0.0,
                BelowThreshold::DownWeight => 0.1 * sim,
            }
        };
    }
    Ok(total / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "animal\troot\ndog\tanimal\ncat\tanimal\n";

    #[test]
    fn toy_values() {
        let t = TaxonomyTree::parse(TOY).unwrap();
        assert_eq!(t.depth("root").unwrap(), 1);
        assert_eq!(t.depth("dog").unwrap(), 3);
        assert_eq!(wu_palmer("dog", "cat", &t).unwrap(), 2.0 / 3.0);
        assert_eq!(wu_palmer("dog", "dog", &t).unwrap(), 1.0);
        assert_eq!(wu_palmer("animal", "root", &t).unwrap(), 2.0 / 3.0);
        assert!(wu_palmer("dog", "wolf", &t).is_err());
    }

    #[test]
    fn root_lca_between_deep_leaves() {
        let t = TaxonomyTree::parse("animal\troot\nplant\troot\ndog\tanimal\noak\tplant\n").unwrap();
        assert_eq!(wu_palmer("dog", "oak", &t).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn thresholding() {
        let t = TaxonomyTree::parse(TOY).unwrap();
        assert_eq!(wups_score(&["dog"], &["cat"], &t, 0.9).unwrap(), 0.0);
        assert_eq!(wups_score(&["dog"], &["cat"], &t, 0.0).unwrap(), 2.0 / 3.0);
        assert_eq!(wups_score(&["dog", "cat"], &["dog", "cat"], &t, 0.9).unwrap(), 1.0);
        let down = WupsOptions { threshold: 0.9, below: BelowThreshold::DownWeight, exact_fallback: false };
        assert!((wups_score_with(&["dog"], &["cat"], &t, down).unwrap() - 0.2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_words() {
        let t = TaxonomyTree::parse(TOY).unwrap();
        assert!(wups_score(&["wolf"], &["dog"], &t, 0.0).is_err());
        let fb = WupsOptions { exact_fallback: true, ..Default::default() };
        assert_eq!(wups_score_with(&["wolf", "fox"], &["wolf", "dog"], &t, fb).unwrap(), 0.5);
    }

    #[test]
    fn malformed_trees() {
        assert!(TaxonomyTree::parse("a\tb\nc\td\n").is_err());
        assert!(TaxonomyTree::parse("a\tb\nb\ta\n").is_err());
        assert!(TaxonomyTree::parse("a\tb\na\tc\n").is_err());
        assert!(TaxonomyTree::parse("a b\n").is_err());
    }
}
