//! Drift-reducing rehearsal for online continual learning.
//!
//! The crate implements a single-pass training loop over a stream of tasks,
//! with a centroid-based rehearsal memory, a two-level angular-margin
//! contrastive loss, an optional feature-anchoring distillation loss, and
//! the usual forgetting metrics (average accuracy, forgetting measure,
//! long-term remembering).
//!
//! Layout:
//! - [`numerics`]: dense vectors/matrices, stable reductions, clamped angles
//! - [`rng`]: seedable, labeled random streams (one label per purpose)
//! - [`model`]: fully-connected backbone with per-task heads and exact
//!   hand-derived gradients
//! - [`cos`]: the centroid-based online selection store (rehearsal memory)
//! - [`losses`]: contrastive margin loss, centroid distillation, supervised
//!   contrastive base loss, cross-entropy, and the composed objective
//! - [`streams`]: task-stream construction (synthetic gaussians, IDX files)
//! - [`metrics`]: accuracy matrix, forgetting metrics, drift diagnostics
//! - [`trainer`]: the training loop, baselines, and sampler comparisons
//!
//! Everything is deterministic given a seed; see [`rng::RandomSource`] for
//! the exact generator contract. With the default `parallel` feature,
//! read-only evaluation passes fan out over a rayon pool; results are
//! identical to the sequential fallback.

pub mod cos;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod streams;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Mat64, Vec64};
pub use rng::RandomSource;

/// Task identifier: position of the task in the stream, starting at 0.
pub type TaskId = usize;

/// Global class identifier. Classes are disjoint across tasks.
pub type ClassId = usize;
