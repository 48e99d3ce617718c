//! Freezing-of-gait (FOG) event-type prediction from lower-back 3-axis
//! acceleration.
//!
//! The crate covers the whole pipeline: CSV ingestion and synthetic trials
//! ([`data`]), feature sets A–G ([`features`]), PCA / k-means / silhouette /
//! Pearson ([`stats`]), a small double-precision layer kernel with analytic
//! gradients ([`nn`]), the transformer-encoder + BiLSTM sequence labeler
//! ([`model`]), cross-validated model groups ([`training`]), scoring
//! ([`evaluation`]) and semi pseudo-labelling of untyped trials
//! ([`pseudolabel`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod nn;
pub mod pseudolabel;
pub mod rng;
pub mod stats;
pub mod training;

pub use error::{Error, Result};
