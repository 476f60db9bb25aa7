//! Seeded synthetic bilingual benchmarks with a known ground-truth map.
//!
//! Source rows are i.i.d. Gaussian, preprocessed. Target row `i` is the
//! ground-truth transform of raw source row `i` plus Gaussian noise, then
//! preprocessed. Tokens are `s<i>` and `t<i>`, and the dictionaries pair
//! `s<i>` with `t<i>`; the first pairs form the training split, then
//! validation, then test.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dictionary::BilingualDictionary;
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{gaussian, qr_orthogonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Identity,
    Orthogonal,
    GeneralLinear,
    Nonlinear,
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "orthogonal" => Ok(Self::Orthogonal),
            "general-linear" | "linear" => Ok(Self::GeneralLinear),
            "nonlinear" => Ok(Self::Nonlinear),
            _ => Err(Error::Config(format!("unknown transform kind {s:?}"))),
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Orthogonal => "orthogonal",
            Self::GeneralLinear => "general-linear",
            Self::Nonlinear => "nonlinear",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub kind: TransformKind,
    pub seed: u64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    /// Retrieval neighbourhood size the benchmark must support (`n >= 3k`).
    pub k: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 50,
            noise: 0.0,
            kind: TransformKind::Orthogonal,
            seed: 7,
            train_frac: 0.9,
            val_frac: 0.05,
            test_frac: 0.05,
            k: 10,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if self.n < 3 * self.k.max(1) {
            return Err(Error::Config(format!("n = {} is below 3k = {}", self.n, 3 * self.k)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a non-negative number".into()));
        }
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must be in [0, 1] and sum to 1".into()));
        }
        Ok(())
    }

    /// Pair counts of the (train, val, test) splits.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let train = (self.n as f64 * self.train_frac).round() as usize;
        let val = ((self.n as f64 * self.val_frac).round() as usize).min(self.n - train);
        (train, val, self.n - train - val)
    }
}

/// The map that generated the target space.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Identity,
    /// Row form: target = `x M^T`.
    Linear(Array2<f64>),
    /// target = `tanh(x A^T) B^T`.
    Nonlinear { a: Array2<f64>, b: Array2<f64> },
}

impl GroundTruth {
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            GroundTruth::Identity => x.to_owned(),
            GroundTruth::Linear(m) => x.dot(&m.t()),
            GroundTruth::Nonlinear { a, b } => x.dot(&a.t()).mapv_into(f64::tanh).dot(&b.t()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub src: EmbeddingSet,
    pub tgt: EmbeddingSet,
    pub train: BilingualDictionary,
    pub val: BilingualDictionary,
    pub test: BilingualDictionary,
    pub truth: GroundTruth,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let src_words: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let tgt_words: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let raw = gaussian(n, d, &mut rng);

    let scale = 1.0 / (d as f64).sqrt();
    let truth = match spec.kind {
        TransformKind::Identity => GroundTruth::Identity,
        TransformKind::Orthogonal => GroundTruth::Linear(qr_orthogonal(&gaussian(d, d, &mut rng))),
        TransformKind::GeneralLinear => GroundTruth::Linear(gaussian(d, d, &mut rng) * scale),
        TransformKind::Nonlinear => GroundTruth::Nonlinear {
            a: gaussian(d, d, &mut rng) * (2.0 * scale),
            b: gaussian(d, d, &mut rng) * scale,
        },
    };

    // The map acts on the raw rows. Normalizing and centering commute with
    // an orthogonal map, so for that kind the preprocessed target is
    // exactly the preprocessed source mapped.
    let mut mapped = truth.apply(raw.view());
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
        mapped.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let src = EmbeddingSet::new(src_words, raw, format!("synth source seed {}", spec.seed))?.preprocess()?;
    let tgt = EmbeddingSet::new(tgt_words, mapped, format!("synth {} target seed {}", spec.kind, spec.seed))?
        .preprocess()?;

    let (n_train, n_val, _) = spec.split_sizes();
    let split = |range: std::ops::Range<usize>| {
        BilingualDictionary::from_pairs(range.map(|i| (format!("s{i}"), format!("t{i}")))).with_direction("s", "t")
    };
    Ok(SynthData {
        src,
        tgt,
        train: split(0..n_train),
        val: split(n_train..n_train + n_val),
        test: split(n_train + n_val..n),
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalize_rows;
    use crate::mapper::Mapper;
    use crate::retrieval::{precision_at_k, Direction, RetrievalMethod};
    use std::collections::HashSet;

    fn small(kind: TransformKind) -> SynthSpec {
        SynthSpec {
            n: 200,
            d: 10,
            kind,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn identity_copies_source() {
        let data = generate(&small(TransformKind::Identity)).unwrap();
        assert_eq!(data.tgt.matrix(), data.src.matrix());
    }

    #[test]
    fn orthogonal_preserves_cosines() {
        let spec = small(TransformKind::Orthogonal);
        let data = generate(&spec).unwrap();
        let mapped = data.truth.apply(data.src.matrix());
        let s = normalize_rows(data.src.matrix());
        let t = normalize_rows(mapped.view());
        let gs = s.dot(&s.t());
        let gt = t.dot(&t.t());
        let diff = (&gs - &gt).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-9);
    }

    #[test]
    fn orthogonal_target_is_mapped_source() {
        let data = generate(&small(TransformKind::Orthogonal)).unwrap();
        let mapped = data.truth.apply(data.src.matrix());
        let diff = (&mapped - &data.tgt.matrix()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn deterministic() {
        for kind in [
            TransformKind::Orthogonal,
            TransformKind::GeneralLinear,
            TransformKind::Nonlinear,
        ] {
            let spec = SynthSpec { noise: 0.1, ..small(kind) };
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let data = generate(&small(TransformKind::Orthogonal)).unwrap();
        assert_eq!((data.train.len(), data.val.len(), data.test.len()), (180, 10, 10));
        let all: HashSet<_> = data
            .train
            .pairs()
            .iter()
            .chain(data.val.pairs())
            .chain(data.test.pairs())
            .cloned()
            .collect();
        assert_eq!(all.len(), 200);
    }

    #[test]
    fn oracle_mapper_is_perfect() {
        let spec = SynthSpec {
            n: 500,
            d: 20,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        let GroundTruth::Linear(q) = &data.truth else { panic!("orthogonal kind is linear") };
        let oracle = Mapper::linear(q.clone()).unwrap();
        let (fwd, _) = data.test.eval_groups(&data.src, &data.tgt).unwrap();
        let (rev, _) = data.test.reversed().eval_groups(&data.tgt, &data.src).unwrap();
        for (dir, groups) in [(Direction::Forward, &fwd), (Direction::Reverse, &rev)] {
            let r = precision_at_k(&oracle, dir, groups, &data.src, &data.tgt, RetrievalMethod::Csls { k: 10 }, None).unwrap();
            assert_eq!(r.p_at_1, 1.0, "{dir:?}");
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { n: 20, ..small(TransformKind::Identity) }).is_err());
        assert!(generate(&SynthSpec { train_frac: 0.5, ..small(TransformKind::Identity) }).is_err());
        assert!(generate(&SynthSpec { noise: -1.0, ..small(TransformKind::Identity) }).is_err());
        assert!(generate(&SynthSpec { d: 0, ..small(TransformKind::Identity) }).is_err());
    }
}
