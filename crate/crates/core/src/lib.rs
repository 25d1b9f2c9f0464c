//! Sparse-orthonormalization optimizers for matrix parameters.
//!
//! The crate provides Muon, Dion2 (row/column selection with selective
//! momentum decay), a low-rank Dion baseline and the full-decay ablation,
//! together with the dense linear algebra they need, a small synthetic
//! training harness, and an optimizer step-time benchmark.
//!
//! Layout:
//! - [`linalg`]: dense matrices, norms, Gram–Schmidt, Jacobi SVD, keyed RNG.
//! - [`orthonorm`]: Newton–Schulz orthonormalization.
//! - [`selection`]: row/column selection, gather and scatter.
//! - [`optim`]: optimizer configs, state, and step functions.
//! - [`trainer`]: teacher-student tasks with exact gradients and the training loop.
//! - [`bench`]: step-time micro-benchmark and communication-volume model.
//! - [`config`]: strict JSON config parsing.
//! - [`verify`]: the invariant battery behind `dion2 verify`.
//! - [`cli`]: command implementations used by the binary.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod orthonorm;
pub mod selection;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Real, Rng};
