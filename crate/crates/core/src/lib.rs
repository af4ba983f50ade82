//! Joint text / image / voxel embedding spaces trained with contrastive
//! losses, text-to-shape retrieval over them, and the ranking and
//! shape-similarity metrics used to evaluate retrieval.
//!
//! The crate is organized bottom-up:
//!
//! - [`space`], [`rng`], [`linalg`]: embedding types, cosine similarity, seeded streams.
//! - [`datagen`]: vocabulary, featurizers, synthetic data, file formats.
//! - [`encoders`]: projection heads with hand-written backward passes.
//! - [`losses`]: NT-Xent (bimodal and trimodal) and the semi-hard triplet baseline.
//! - [`optim`]: Adam, batching and the training loop.
//! - [`retrieval`]: shape index and text queries.
//! - [`metrics`]: RR@k / NDCG@k / MRR and point-cloud metrics.
//! - [`experiment`]: config-driven commands used by the CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Dense numeric kernels read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod datagen;
pub mod encoders;
pub mod error;
pub mod experiment;
#[cfg(test)]
mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod retrieval;
pub mod rng;
pub mod space;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::{rng_stream, Rng};
pub use space::{cosine_similarity, l2_normalize, Embedding, EmbeddingSpace, Modality};
