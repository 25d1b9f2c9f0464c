//! Optimizers for matrix parameters.
//!
//! All matrix optimizers apply updates of the form
//! `W ← W − η·sqrt(fan_out/fan_in)·O` where `O` comes out of Newton–Schulz,
//! so the update has RMS→RMS operator norm close to `η`. They differ in what
//! gets orthonormalized and how momentum is decayed afterwards:
//!
//! | algorithm | orthonormalized | decay |
//! |---|---|---|
//! | Muon | full momentum | `M ← μM + g` |
//! | Dion2 | selected rows/columns `M[𝒦]` | `M[𝒦] ← μ·M[𝒦]` only |
//! | Dion2 full-decay ablation | `M[𝒦]` | `M ← μ·M` |
//! | Dion baseline | low-rank `M·V` | `M ← M − (1−μ)·M·V·Vᵀ` |

mod schedule;
mod steps;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};
use crate::orthonorm::NewtonSchulzParams;
use crate::selection::{Axis, SelectionMask, SelectionStrategy};

pub use schedule::lr_schedule;
pub use steps::{
    dion2_fulldecay_step, dion2_step, dion_baseline_step, momentum_sgd_step, muon_step, step,
};

pub const DEFAULT_ETA: f64 = 0.02;
pub const DEFAULT_MU: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_RANK_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Muon,
    Dion2,
    DionBaseline,
    Dion2FullDecayAblation,
    MomentumSgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Muon => "muon",
            Algorithm::Dion2 => "dion2",
            Algorithm::DionBaseline => "dion_baseline",
            Algorithm::Dion2FullDecayAblation => "dion2_full_decay_ablation",
            Algorithm::MomentumSgd => "momentum_sgd",
        }
    }
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_mu() -> f64 {
    DEFAULT_MU
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_rank_fraction() -> f64 {
    DEFAULT_RANK_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Selected fraction of rows/columns (Dion2 variants).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub selection: SelectionStrategy,
    #[serde(default)]
    pub axis: Axis,
    #[serde(default)]
    pub ns_params: NewtonSchulzParams,
    /// Subspace rank as a fraction of `min(rows, cols)` (Dion baseline).
    #[serde(default = "default_rank_fraction")]
    pub rank_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Scale Dion2 sub-updates by the submatrix shape instead of the full one.
    #[serde(default)]
    pub submatrix_scale: bool,
    /// Nesterov-style lookahead for Muon.
    #[serde(default)]
    pub nesterov: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            eta: DEFAULT_ETA,
            mu: DEFAULT_MU,
            alpha: DEFAULT_ALPHA,
            selection: SelectionStrategy::L1,
            axis: Axis::Auto,
            ns_params: NewtonSchulzParams::default(),
            rank_fraction: DEFAULT_RANK_FRACTION,
            seed: 0,
            submatrix_scale: false,
            nesterov: false,
        }
    }

    pub fn muon() -> Self {
        Self::new(Algorithm::Muon)
    }

    pub fn dion2(alpha: f64, selection: SelectionStrategy) -> Self {
        Self {
            alpha,
            selection,
            ..Self::new(Algorithm::Dion2)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "eta",
                format!("must be > 0, got {}", self.eta),
            ));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::config(
                "mu",
                format!("must be in [0, 1), got {}", self.mu),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(
                "alpha",
                format!("must be in (0, 1], got {}", self.alpha),
            ));
        }
        if !(self.rank_fraction > 0.0 && self.rank_fraction <= 1.0) {
            return Err(Error::config(
                "rank_fraction",
                format!("must be in (0, 1], got {}", self.rank_fraction),
            ));
        }
        self.ns_params.validate()
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::muon()
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct ParamState<T: Real = f64> {
    /// Keys the random selection stream together with the step counter.
    pub id: u64,
    pub momentum: Matrix<T>,
    pub step: u64,
    /// Orthonormal `cols×r` basis (Dion baseline only), created on first step.
    pub subspace: Option<Matrix>,
}

impl<T: Real> ParamState<T> {
    pub fn new(id: u64, rows: usize, cols: usize) -> Self {
        Self {
            id,
            momentum: Matrix::zeros(rows, cols),
            step: 0,
            subspace: None,
        }
    }

    pub fn for_param(id: u64, w: &Matrix<T>) -> Self {
        Self::new(id, w.rows(), w.cols())
    }
}

/// Which part of the parameter an update touched.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Full,
    Selected(SelectionMask),
}

impl Applied {
    pub fn fraction(&self) -> f64 {
        match self {
            Applied::Full => 1.0,
            Applied::Selected(m) => m.fraction(),
        }
    }

    pub fn mask(&self) -> Option<&SelectionMask> {
        match self {
            Applied::Full => None,
            Applied::Selected(m) => Some(m),
        }
    }
}

/// What a step applied: `W[applied] ← W[applied] − scale·orthonormalized`.
#[derive(Debug, Clone)]
pub struct UpdateOutcome<T: Real = f64> {
    pub applied: Applied,
    pub orthonormalized: Matrix<T>,
    pub scale: f64,
}

impl<T: Real> UpdateOutcome<T> {
    /// The applied update `ΔW` as a dense matrix of the parameter's shape
    /// (zero outside the selection).
    pub fn delta(&self, rows: usize, cols: usize) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(rows, cols);
        match &self.applied {
            Applied::Full => out.axpy(T::of(-self.scale), &self.orthonormalized)?,
            Applied::Selected(mask) => crate::selection::scatter_update(
                &mut out,
                mask,
                &self.orthonormalized,
                T::of(self.scale),
            )?,
        }
        Ok(out)
    }
}
