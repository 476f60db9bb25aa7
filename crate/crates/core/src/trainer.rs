//! Mini-batch training of a [`Mapper`] with the cycle-consistency loss.
//!
//! Each epoch shuffles the training pairs with a generator keyed on
//! `(seed, epoch)`, runs Adam over every batch (the last one may be short),
//! then scores forward P@1 with CSLS on the validation groups. The learning
//! rate decays by `lr_decay` every epoch and is additionally multiplied by
//! `lr_shrink` whenever validation P@1 drops below the best seen so far. The
//! returned mapper is the snapshot from the best validation epoch (the latest
//! one on ties).

use std::time::{Duration, Instant};

use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{EvalGroups, IndexedPairs};
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::losses::{ccl, orthogonal_penalty, CandidatePools, LossKind};
use crate::mapper::{Mapper, MapperKind, Sharing};
use crate::optim::AdamState;
use crate::retrieval::{precision_at_k, Direction, RetrievalMethod};

/// Where RCSLS neighbourhoods are searched during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolPolicy {
    /// All bound training rows on each side.
    #[default]
    Full,
    /// A fresh seeded subset of this many training rows every epoch.
    Sampled(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch multiplicative decay.
    pub lr_decay: f64,
    /// Extra factor applied when validation P@1 falls below the best.
    pub lr_shrink: f64,
    /// Weight of the orthogonal penalty.
    pub map_beta: f64,
    pub ortho: bool,
    pub max_vocab: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub rcsls_k: usize,
    pub pool: PoolPolicy,
    pub kind: MapperKind,
    pub hidden: usize,
    pub sharing: Sharing,
    pub seed: u64,
    /// CSLS neighbourhood size used for validation.
    pub eval_k: usize,
    /// Cap on the CSLS `r_S` pool during validation.
    pub val_pool: Option<usize>,
    /// (source language, target language).
    pub direction: (String, String),
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 0.0005,
            lr_decay: 0.98,
            lr_shrink: 0.5,
            map_beta: 0.001,
            ortho: true,
            max_vocab: 200_000,
            epochs: 50,
            loss: LossKind::CosineRcsls,
            rcsls_k: 10,
            pool: PoolPolicy::Full,
            kind: MapperKind::Linear,
            hidden: 4096,
            sharing: Sharing::Shared,
            seed: 0,
            eval_k: 10,
            val_pool: None,
            direction: ("src".into(), "tgt".into()),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        unit("lr_decay", self.lr_decay)?;
        unit("lr_shrink", self.lr_shrink)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.map_beta >= 0.0 && self.map_beta.is_finite()) {
            return Err(Error::Config("map_beta must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.max_vocab == 0 {
            return Err(Error::Config("batch_size, epochs and max_vocab must be at least 1".into()));
        }
        if self.rcsls_k == 0 || self.eval_k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.kind == MapperKind::Ffn && self.hidden == 0 {
            return Err(Error::Config("hidden must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per training pair.
    pub loss: f64,
    pub val_p1: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_p1: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    /// One JSON object per epoch, newline-terminated.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct serializes") + "\n")
            .collect()
    }

    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

/// Permutation of `0..n` determined by `(seed, epoch)`.
pub fn shuffle_epoch(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Train from the configured initialization.
pub fn train(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    train_pairs: &IndexedPairs,
    val_groups: &EvalGroups,
    cfg: &TrainingConfig,
) -> Result<(Mapper, TrainReport)> {
    cfg.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::Shape(format!(
            "source dimension {} differs from target dimension {}",
            src.dim(),
            tgt.dim()
        )));
    }
    let mapper = Mapper::init(cfg.kind, src.dim(), cfg.hidden, cfg.sharing, cfg.seed)?;
    train_from(mapper, src, tgt, train_pairs, val_groups, cfg)
}

/// Train starting from the given parameters.
pub fn train_from(
    mut mapper: Mapper,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    train_pairs: &IndexedPairs,
    val_groups: &EvalGroups,
    cfg: &TrainingConfig,
) -> Result<(Mapper, TrainReport)> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    if val_groups.is_empty() {
        return Err(Error::Empty("validation groups"));
    }
    let start = Instant::now();
    let xs_all = src.rows(&train_pairs.source_indices());
    let xt_all = tgt.rows(&train_pairs.target_indices());
    let n = train_pairs.len();

    let mut adam = AdamState::new(mapper.params());
    let mut lr = cfg.learning_rate;
    let mut best: Option<(f64, usize, Mapper)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (tpool, spool) = epoch_pools(&xs_all, &xt_all, cfg, epoch);
        let pools = CandidatePools {
            target: tpool.view(),
            source: spool.view(),
            k: cfg.rcsls_k,
        };
        let perm = shuffle_epoch(n, cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for (batch, idx) in perm.chunks(cfg.batch_size).enumerate() {
            let xs = xs_all.select(Axis(0), idx);
            let xt = xt_all.select(Axis(0), idx);
            let mut out = ccl(&mapper, xs.view(), xt.view(), cfg.loss, Some(&pools)).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFiniteLoss { epoch, batch },
                other => other,
            })?;
            if cfg.ortho {
                out = out.combine(&orthogonal_penalty(&mapper, cfg.map_beta));
            }
            if !out.total.is_finite() || !out.grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += out.total;
            adam.step(mapper.params_mut(), &out.grads, lr)?;
        }
        let epoch_loss = epoch_loss / n as f64;

        let val = precision_at_k(
            &mapper,
            Direction::Forward,
            val_groups,
            src,
            tgt,
            RetrievalMethod::Csls { k: cfg.eval_k },
            cfg.val_pool,
        )?
        .p_at_1;
        records.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            val_p1: val,
            lr,
        });
        info!("epoch {epoch}: loss {epoch_loss:.6} val P@1 {val:.4} lr {lr:.3e}");

        let best_val = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.0);
        if val < best_val {
            lr *= cfg.lr_shrink;
            debug!("validation dropped below {best_val:.4}; lr shrunk to {lr:.3e}");
        }
        if val >= best_val {
            best = Some((val, epoch, mapper.clone()));
        }
        lr *= cfg.lr_decay;
    }

    let (best_val_p1, best_epoch, best_mapper) = best.expect("at least one epoch");
    let report = TrainReport {
        epochs: records,
        best_epoch,
        best_val_p1,
        wall_time: start.elapsed(),
    };
    info!(
        "best epoch {best_epoch} (val P@1 {best_val_p1:.4}) after {:.2?}",
        report.wall_time
    );
    Ok((best_mapper, report))
}

fn epoch_pools(xs: &Array2<f64>, xt: &Array2<f64>, cfg: &TrainingConfig, epoch: usize) -> (Array2<f64>, Array2<f64>) {
    match cfg.pool {
        PoolPolicy::Sampled(size) if size < xs.nrows() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(epoch as u64);
            let mut pick = index::sample(&mut rng, xs.nrows(), size).into_vec();
            pick.sort_unstable();
            (xt.select(Axis(0), &pick), xs.select(Axis(0), &pick))
        }
        _ => (xt.clone(), xs.clone()),
    }
}
