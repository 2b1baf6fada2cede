//! Beam-RSRP fingerprint positioning.
//!
//! The crate simulates a mmWave urban deployment (sites, sectors, grids of
//! SSB beams, rectangular city blocks), computes per-beam RSRP fingerprints on
//! a regular location grid, turns them into labeled feature datasets and
//! trains two position regressors on them: a feedforward neural network and a
//! CART regression tree. The [`eval`] module scores predictions with the mean
//! and population standard deviation of the Euclidean error and drives whole
//! experiment matrices.
//!
//! Pipeline, bottom-up:
//!
//! 1. [`scenario::build_scenario`]: deterministic world from a config.
//! 2. [`fingerprint::generate_samples`]: RSRP of every beam at every outdoor
//!    grid point, serving cell and LoS flag.
//! 3. [`fingerprint::build_dataset`] / [`fingerprint::partition_by_cell`]:
//!    feature extraction, train/test split, normalization statistics.
//! 4. [`mlp`] / [`dtree`]: regressors.
//! 5. [`eval::run_experiment`] / [`eval::run_matrix`]: reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dtree;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod geometry;
pub mod io;
pub mod mlp;
pub mod propagation;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
