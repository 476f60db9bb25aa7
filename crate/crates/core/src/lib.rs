//! Bi-directional manifold alignment for cross-lingual word embeddings.
//!
//! One invertible mapping (a square matrix, or two bias-free layers with a
//! `tanh` in between) is trained with a cycle-consistency loss so that the
//! same parameters translate source to target (forward flow) and target to
//! source (reverse flow, each layer transposed and applied in reverse order).
//!
//! The crate is organised as:
//!
//! - [`embeddings`]: `.vec` parsing/writing and the normalize, center,
//!   normalize preprocessing pipeline.
//! - [`dictionary`]: bilingual dictionaries, the unique-pair filter and
//!   binding of word pairs to embedding rows.
//! - [`mapper`]: linear and feedforward mappers with forward and reverse
//!   flow, initialization and the binary model format.
//! - [`losses`]: MSE, cosine, RCSLS and cosine+RCSLS cycle-consistency
//!   losses and the layerwise orthogonal penalty, all with analytic
//!   gradients, plus a finite-difference gradient checker.
//! - [`optim`] and [`trainer`]: Adam and the mini-batch training loop with
//!   learning-rate schedule and validation savepoints.
//! - [`retrieval`]: nearest-neighbour and CSLS retrieval, Precision@k and
//!   word translation.
//! - [`synth`]: seeded synthetic benchmarks with a known ground truth.
//! - [`cli`]: the `bdma` command line.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod mapper;
pub mod optim;
pub mod retrieval;
pub mod synth;
pub mod trainer;

pub use dictionary::{BilingualDictionary, IndexedPairs};
pub use embeddings::EmbeddingSet;
pub use error::{Error, Result};
pub use losses::{LossKind, LossOutput};
pub use mapper::{Mapper, MapperKind, Sharing};
pub use retrieval::{Direction, EvalReport, RetrievalMethod};
pub use trainer::{TrainReport, TrainingConfig};

/// Toolkit version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
