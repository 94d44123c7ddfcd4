//! Attribute unlearning for collaborative-filtering recommenders.
//!
//! The crate covers the full experimental loop:
//!
//! * [`data`] — MovieLens-format parsing, k-core filtering, id remapping and
//!   reproducible train/val/test splits.
//! * [`recsys`] — matrix-factorization and light graph-convolution models,
//!   top-k recommendation and NDCG/HR evaluation.
//! * [`unlearn`] — post-training attribute unlearning: a distinguishability
//!   loss (pairwise or distributional) plus a Frobenius anchor, optimized by
//!   gradient descent directly on the user-embedding matrix.
//! * [`attack`] — grey-box attribute-inference attacks (MLP and gradient
//!   boosted trees) with accuracy/precision/recall/AUC reporting.
//! * [`analysis`] — per-dimension histograms, overlap scores, PCA projections
//!   and alpha sweeps.
//! * [`synth`] — deterministic synthetic datasets used by tests, demos and
//!   benchmarks.

pub use ndarray;

pub mod analysis;
pub mod attack;
pub mod data;
mod error;
pub mod recsys;
mod rng;
pub mod synth;
pub mod unlearn;

pub use data::{AttributeTable, InteractionDataset, RawInteraction, RatingsFormat, SplitRatios};
pub use error::{Error, Result};
pub use recsys::{EmbeddingModel, ModelKind, RecReport, TrainConfig};
pub use rng::derive_seed;
pub use unlearn::{LossKind, UnlearnConfig, UnlearnResult};
