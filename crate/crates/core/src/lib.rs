//! Multi-label learning with learned global and local label-correlation
//! manifolds.
//!
//! The learner jointly recovers missing entries of a partially observed
//! label matrix, fits a linear map from instances to a low-dimensional
//! latent label space, and learns one Laplacian factor per instance group.
//! Labels are three-state: `+1` positive, `-1` negative and `0` missing.
//!
//! Typical flow:
//!
//! 1. [`dataset::parse_gml`] a dataset, optionally [`dataset::apply_mask`] it.
//! 2. Partition the training instances with [`clustering::kmeans`].
//! 3. [`solver::fit`] a [`model::GlocalModel`].
//! 4. [`model::score`] new instances and [`metrics::evaluate`] the ranking.

pub mod cli;
pub mod clustering;
pub mod correlation;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod synth;

pub use error::{GlocalError, Result};
