//! Differentially private optimization for models with sparse gradients.
//!
//! The crate is organized around the observation that many wide models
//! (embedding layers, bag-of-features GLMs) produce per-sample gradients whose
//! support is a tiny fraction of the parameter vector. Exploiting that
//! sparsity lets a DP trainer privately *select* a small set of coordinates
//! and add noise only there, instead of drowning the whole parameter vector
//! in Gaussian noise.
//!
//! Modules:
//!
//! * [`mechanisms`] — randomized DP primitives: Laplace/Gaussian noise, the
//!   numeric sparse-vector technique, exponential-mechanism top-k selection,
//!   and a uniform selection baseline.
//! * [`accountant`] — pure (ε, δ) arithmetic: amplification by sampling,
//!   strong composition, per-step and whole-run budgets for both trainers.
//! * [`erm`] — generalized linear models with provably sparse gradients and
//!   the grouped-dataset DP-ERM training loop.
//! * [`trainer`] — the two-stage-clipping sparse DP optimizer for arbitrary
//!   differentiable objectives, plus DP-SGD and non-private baselines.
//! * [`embedding`] — CBOW word embeddings with negative sampling: corpus
//!   preprocessing and sparse per-sample gradients.
//! * [`memorization`] — canary-based memorization auditing: log-perplexity,
//!   sampled rank, and a chi-squared uniformity test.
//!
//! Numeric core types are generic over the scalar type (any [`Real`], i.e.
//! `f32` or `f64`); privacy arithmetic is always carried out in `f64`.

pub mod accountant;
pub mod budget;
pub mod embedding;
pub mod erm;
pub mod error;
pub mod mechanisms;
pub mod memorization;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod trainer;

pub use budget::PrivacyBudget;
pub use error::{Error, Result};
pub use rng::NoiseSource;
pub use scalar::Real;
pub use sparse::{SelectionMask, SparseVector};

/// Single-precision sparse vector.
pub type SparseVec32 = SparseVector<f32>;
/// Double-precision sparse vector.
pub type SparseVec64 = SparseVector<f64>;
/// Single-precision embedding table.
pub type EmbeddingTable32 = embedding::EmbeddingTable<f32>;
/// Double-precision embedding table.
pub type EmbeddingTable64 = embedding::EmbeddingTable<f64>;
/// Double-precision GLM.
pub type GlmModel64 = erm::GlmModel<f64>;
