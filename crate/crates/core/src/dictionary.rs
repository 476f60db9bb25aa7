//! Bilingual dictionaries and their binding to embedding rows.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

/// Ordered (source, target) word pairs without exact duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BilingualDictionary {
    pairs: Vec<(String, String)>,
    /// (source language id, target language id).
    pub direction: (String, String),
}

/// Dictionary pairs resolved to embedding row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedPairs {
    pub pairs: Vec<(usize, usize)>,
    pub src_oov: usize,
    pub tgt_oov: usize,
}

/// Query row index to the set of row indices counted as a correct answer.
pub type EvalGroups = BTreeMap<usize, BTreeSet<usize>>;

/// How [`BilingualDictionary::sample_unique`] picks pairs when there are
/// more than the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleMode {
    /// The first `cap` pairs in input order.
    #[default]
    Head,
    /// A seeded random subset, kept in input order.
    Random,
}

impl BilingualDictionary {
    /// Build from pairs, collapsing exact duplicates and keeping first-seen order.
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (s, t) in pairs {
            let pair = (s.into(), t.into());
            if seen.insert(pair.clone()) {
                out.push(pair);
            }
        }
        Self {
            pairs: out,
            direction: (String::from("src"), String::from("tgt")),
        }
    }

    pub fn with_direction(mut self, src: impl Into<String>, tgt: impl Into<String>) -> Self {
        self.direction = (src.into(), tgt.into());
        self
    }

    /// Parse `source<ws>target` lines. Blank lines are ignored.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                [s, t] => pairs.push((s.to_string(), t.to_string())),
                _ => {
                    return Err(Error::DictionaryFormat {
                        line: i + 1,
                        found: fields.len(),
                    })
                }
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    /// Keep only pairs whose source and target each occur in exactly one pair.
    pub fn filter_unique(&self) -> Self {
        let mut src_count: HashMap<&str, usize> = HashMap::new();
        let mut tgt_count: HashMap<&str, usize> = HashMap::new();
        for (s, t) in &self.pairs {
            *src_count.entry(s).or_default() += 1;
            *tgt_count.entry(t).or_default() += 1;
        }
        let pairs = self
            .pairs
            .iter()
            .filter(|(s, t)| src_count[s.as_str()] == 1 && tgt_count[t.as_str()] == 1)
            .cloned()
            .collect();
        Self {
            pairs,
            direction: self.direction.clone(),
        }
    }

    /// Up to `cap` pairs; [`SampleMode::Head`] ignores `seed`.
    pub fn sample_unique(&self, cap: usize, mode: SampleMode, seed: u64) -> Self {
        let pairs = if cap >= self.pairs.len() {
            self.pairs.clone()
        } else {
            match mode {
                SampleMode::Head => self.pairs[..cap].to_vec(),
                SampleMode::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut picked = index::sample(&mut rng, self.pairs.len(), cap).into_vec();
                    picked.sort_unstable();
                    picked.into_iter().map(|i| self.pairs[i].clone()).collect()
                }
            }
        };
        Self {
            pairs,
            direction: self.direction.clone(),
        }
    }

    /// Split into (head, tail) where the tail holds `ceil(len * fraction)` pairs.
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let tail = ((self.pairs.len() as f64) * fraction).ceil() as usize;
        let cut = self.pairs.len() - tail.min(self.pairs.len());
        (
            Self {
                pairs: self.pairs[..cut].to_vec(),
                direction: self.direction.clone(),
            },
            Self {
                pairs: self.pairs[cut..].to_vec(),
                direction: self.direction.clone(),
            },
        )
    }

    /// Same pairs with source and target swapped.
    pub fn reversed(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|(s, t)| (t.clone(), s.clone())).collect(),
            direction: (self.direction.1.clone(), self.direction.0.clone()),
        }
    }

    /// Resolve pairs to row indices, dropping and counting out-of-vocabulary pairs.
    ///
    /// A pair missing on both sides counts as a source drop.
    pub fn bind(&self, src: &EmbeddingSet, tgt: &EmbeddingSet) -> Result<IndexedPairs> {
        let mut out = IndexedPairs {
            pairs: Vec::with_capacity(self.pairs.len()),
            src_oov: 0,
            tgt_oov: 0,
        };
        for (s, t) in &self.pairs {
            match (src.lookup(s), tgt.lookup(t)) {
                (None, _) => out.src_oov += 1,
                (Some(_), None) => out.tgt_oov += 1,
                (Some(i), Some(j)) => out.pairs.push((i, j)),
            }
        }
        if out.pairs.is_empty() {
            return Err(Error::AllPairsDropped {
                src_oov: out.src_oov,
                tgt_oov: out.tgt_oov,
            });
        }
        Ok(out)
    }

    /// Group every in-vocabulary translation under its source row.
    pub fn eval_groups(&self, src: &EmbeddingSet, tgt: &EmbeddingSet) -> Result<(EvalGroups, IndexedPairs)> {
        let bound = self.bind(src, tgt)?;
        let mut groups = EvalGroups::new();
        for &(i, j) in &bound.pairs {
            groups.entry(i).or_default().insert(j);
        }
        Ok((groups, bound))
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Serialize as `source<TAB>target` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (a, b) in &self.pairs {
            s.push_str(a);
            s.push('\t');
            s.push_str(b);
            s.push('\n');
        }
        s
    }
}

impl IndexedPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn dict(pairs: &[(&str, &str)]) -> BilingualDictionary {
        BilingualDictionary::from_pairs(pairs.iter().copied())
    }

    fn emb(words: &[&str]) -> EmbeddingSet {
        let n = words.len();
        EmbeddingSet::new(
            words.iter().map(|w| w.to_string()).collect(),
            Array2::eye(n.max(1)).slice(ndarray::s![..n, ..]).to_owned(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn parse_lines() {
        let d = BilingualDictionary::parse("a x\nb\ty\nc  z\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.pairs()[1], ("b".to_string(), "y".to_string()));
    }

    #[test]
    fn parse_collapses_duplicates() {
        let d = BilingualDictionary::parse("a x\na x\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn parse_rejects_three_fields() {
        let err = BilingualDictionary::parse("a x\na b c\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DictionaryFormat { line: 2, found: 3 }));
    }

    #[test]
    fn filter_source_polysemy() {
        let d = dict(&[("a", "x"), ("a", "y"), ("b", "z")]);
        assert_eq!(d.filter_unique(), dict(&[("b", "z")]));
    }

    #[test]
    fn filter_target_polysemy() {
        let d = dict(&[("a", "x"), ("b", "x"), ("c", "y")]);
        assert_eq!(d.filter_unique(), dict(&[("c", "y")]));
    }

    #[test]
    fn sample_head() {
        let d = dict(&[("a", "x"), ("b", "y"), ("c", "z")]);
        assert_eq!(d.sample_unique(5, SampleMode::Head, 0).len(), 3);
        assert_eq!(d.sample_unique(0, SampleMode::Head, 0).len(), 0);
        let ten: Vec<(String, String)> = (0..10).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        let d = BilingualDictionary::from_pairs(ten.clone());
        assert_eq!(d.sample_unique(5, SampleMode::Head, 0).pairs(), &ten[..5]);
    }

    #[test]
    fn sample_random_is_seeded_and_ordered() {
        let d = BilingualDictionary::from_pairs((0..50).map(|i| (format!("s{i}"), format!("t{i}"))));
        let a = d.sample_unique(10, SampleMode::Random, 3);
        assert_eq!(a, d.sample_unique(10, SampleMode::Random, 3));
        assert_eq!(a.len(), 10);
        let idx: Vec<usize> = a.pairs().iter().map(|(s, _)| s[1..].parse().unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bind_counts_oov() {
        let src = emb(&["a", "b", "c"]);
        let tgt = emb(&["x", "y", "z"]);
        let all = dict(&[("a", "x"), ("b", "y")]);
        let b = all.bind(&src, &tgt).unwrap();
        assert_eq!((b.src_oov, b.tgt_oov), (0, 0));
        assert_eq!(b.pairs, vec![(0, 0), (1, 1)]);

        let one = dict(&[("a", "x"), ("q", "y")]);
        let b = one.bind(&src, &tgt).unwrap();
        assert_eq!((b.src_oov, b.tgt_oov), (1, 0));

        let none = dict(&[("q", "x")]);
        assert!(matches!(none.bind(&src, &tgt), Err(Error::AllPairsDropped { .. })));
    }

    #[test]
    fn bind_three_oov_each_side() {
        let src = emb(&["a", "b", "c", "d"]);
        let tgt = emb(&["w", "x", "y", "z"]);
        let d = dict(&[
            ("a", "w"),
            ("s1", "x"),
            ("b", "t1"),
            ("s2", "y"),
            ("c", "t2"),
            ("s3", "z"),
            ("d", "t3"),
            ("d", "z"),
        ]);
        let b = d.bind(&src, &tgt).unwrap();
        assert_eq!((b.src_oov, b.tgt_oov), (3, 3));
        assert_eq!(b.pairs, vec![(0, 0), (3, 3)]);
        assert_eq!(b.src_oov + b.tgt_oov + b.len(), d.len());
    }

    #[test]
    fn groups_collect_all_translations() {
        let src = emb(&["a", "b"]);
        let tgt = emb(&["x", "y", "z"]);
        let (g, _) = dict(&[("a", "x"), ("a", "y")]).eval_groups(&src, &tgt).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[&0], BTreeSet::from([0, 1]));

        let (g, _) = dict(&[("a", "x"), ("b", "z")]).eval_groups(&src, &tgt).unwrap();
        assert!(g.values().all(|s| s.len() == 1));
    }

    #[test]
    fn groups_fixture_with_two_polysemous_sources() {
        let src = emb(&["s0", "s1", "s2", "s3", "s4", "s5", "s6"]);
        let tgt = emb(&["t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9"]);
        let d = dict(&[
            ("s0", "t0"),
            ("s1", "t1"),
            ("s1", "t2"),
            ("s1", "t3"),
            ("s2", "t4"),
            ("s3", "t5"),
            ("s4", "t6"),
            ("s4", "t7"),
            ("s5", "t8"),
            ("s6", "t9"),
        ]);
        let (g, _) = d.eval_groups(&src, &tgt).unwrap();
        let mut expect = EvalGroups::new();
        expect.insert(0, BTreeSet::from([0]));
        expect.insert(1, BTreeSet::from([1, 2, 3]));
        expect.insert(2, BTreeSet::from([4]));
        expect.insert(3, BTreeSet::from([5]));
        expect.insert(4, BTreeSet::from([6, 7]));
        expect.insert(5, BTreeSet::from([8]));
        expect.insert(6, BTreeSet::from([9]));
        assert_eq!(g, expect);
    }

    #[test]
    fn split_tail_fraction() {
        let d = BilingualDictionary::from_pairs((0..20).map(|i| (format!("s{i}"), format!("t{i}"))));
        let (head, tail) = d.split_tail(0.1);
        assert_eq!((head.len(), tail.len()), (18, 2));
        assert_eq!(tail.pairs()[0].0, "s18");
    }
}
