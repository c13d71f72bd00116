//! Latent subgroup separation and allocation sensitivity.
//!
//! The crate measures how far apart two (or more) subgroups sit in a frozen
//! encoder's embedding space, runs fixed-budget allocation sweeps that
//! retrain a last-layer probe at each subgroup fraction, fits sensitivity
//! summaries to the sweep output, and checks the group accuracy-parity bound
//! `|ΔAcc(A = a)| ≤ 4ε + |ΔAcc|` against observed runs.
//!
//! Module map:
//!
//! - [`dataset`]: embedding sets, subgroup summaries, metric values
//! - [`io`]: CSV / binary dataset files and report serialization
//! - [`pca`]: variance-fraction PCA projection
//! - [`separation`]: class-conditional TV, Wasserstein-1, Fréchet distances
//! - [`bound`]: mixture identity, parity bound, sweep checks
//! - [`harness`]: resampling, probes, encoder pre-training, sweeps
//! - [`fits`]: slopes, endpoint gaps, power-law fits, correlation
//! - [`synthetic`]: generators with tunable separation
//! - [`manifest`]: run ids and manifests

#![forbid(unsafe_code)]

pub mod bound;
pub mod dataset;
pub mod error;
pub mod fits;
pub mod harness;
pub mod io;
pub mod manifest;
pub mod pca;
pub mod rng;
pub mod separation;
pub mod synthetic;

pub use dataset::{summarize, validate, Attribute, EmbeddingSet, MetricKind, MetricValue, SubgroupSummary};
pub use error::{Error, Result};
