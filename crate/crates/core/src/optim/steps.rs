use log::warn;

use super::{Algorithm, Applied, OptimizerConfig, ParamState, UpdateOutcome};
use crate::error::{Error, Result};
use crate::linalg::{gemm, gram_schmidt, matmul, Matrix, Op, Real, Rng};
use crate::orthonorm::newton_schulz_auto;
use crate::selection::{
    gather, scale_selected, scatter_update, select_count, select_l1, select_random, SelectionMask,
    SelectionStrategy,
};

/// Seed offset for the Dion subspace stream, kept apart from selection draws.
const SUBSPACE_SALT: u64 = 0xD10_5EED;

fn check_inputs<T: Real>(
    op: &'static str,
    w: &Matrix<T>,
    g: &Matrix<T>,
    state: &ParamState<T>,
) -> Result<()> {
    if w.shape() != g.shape() || w.shape() != state.momentum.shape() {
        return Err(Error::shape(
            op,
            format!(
                "param {:?}, grad {:?}, momentum {:?}",
                w.shape(),
                g.shape(),
                state.momentum.shape()
            ),
        ));
    }
    if !g.is_finite() {
        return Err(Error::numerical(
            op,
            format!("non-finite gradient at step {}", state.step),
        ));
    }
    Ok(())
}

fn full_scale(eta: f64, rows: usize, cols: usize) -> f64 {
    eta * (rows as f64 / cols as f64).sqrt()
}

/// Muon: `M ← μM + g`, `W ← W − η·sqrt(rows/cols)·NS(M)`.
pub fn muon_step<T: Real>(
    w: &mut Matrix<T>,
    g: &Matrix<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome<T>> {
    check_inputs("muon_step", w, g, state)?;
    let m = &mut state.momentum;
    m.scale_in_place(T::of(cfg.mu));
    m.axpy(T::one(), g)?;
    let o = if cfg.nesterov {
        let mut look = g.clone();
        look.axpy(T::of(cfg.mu), m)?;
        newton_schulz_auto(&look, &cfg.ns_params)?
    } else {
        newton_schulz_auto(m, &cfg.ns_params)?
    };
    let scale = full_scale(cfg.eta, w.rows(), w.cols());
    w.axpy(T::of(-scale), &o)?;
    state.step += 1;
    Ok(UpdateOutcome {
        applied: Applied::Full,
        orthonormalized: o,
        scale,
    })
}

/// Dion2 with selective decay: only the selected rows/columns of the
/// momentum are decayed after they are consumed.
pub fn dion2_step<T: Real>(
    w: &mut Matrix<T>,
    g: &Matrix<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome<T>> {
    dion2_impl("dion2_step", w, g, state, cfg, false)
}

/// Ablation of [`dion2_step`] that decays the whole momentum matrix.
pub fn dion2_fulldecay_step<T: Real>(
    w: &mut Matrix<T>,
    g: &Matrix<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome<T>> {
    dion2_impl("dion2_fulldecay_step", w, g, state, cfg, true)
}

fn select<T: Real>(
    m: &Matrix<T>,
    state_id: u64,
    step: u64,
    cfg: &OptimizerConfig,
) -> Result<SelectionMask> {
    match cfg.selection {
        SelectionStrategy::L1 => select_l1(m, cfg.alpha, cfg.axis),
        SelectionStrategy::Random => {
            let axis = cfg.axis.resolve(m.rows(), m.cols());
            let d = axis.len(m.shape());
            let mut rng = Rng::for_step(cfg.seed, state_id, step);
            select_random(cfg.alpha, d, axis, &mut rng)
        }
    }
}

fn dion2_impl<T: Real>(
    op: &'static str,
    w: &mut Matrix<T>,
    g: &Matrix<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
    full_decay: bool,
) -> Result<UpdateOutcome<T>> {
    check_inputs(op, w, g, state)?;
    // 1. accumulate
    state.momentum.axpy(T::one(), g)?;
    // 2. select
    let mask = select(&state.momentum, state.id, state.step, cfg)?;
    // 3. orthonormalize the submatrix
    let sub = gather(&state.momentum, &mask)?;
    let o = newton_schulz_auto(&sub, &cfg.ns_params)?;
    // 4. decay
    if full_decay {
        state.momentum.scale_in_place(T::of(cfg.mu));
    } else {
        scale_selected(&mut state.momentum, &mask, T::of(cfg.mu))?;
    }
    // 5. sparse update
    let scale = if cfg.submatrix_scale {
        full_scale(cfg.eta, sub.rows(), sub.cols())
    } else {
        full_scale(cfg.eta, w.rows(), w.cols())
    };
    scatter_update(w, &mask, &o, T::of(scale))?;
    state.step += 1;
    Ok(UpdateOutcome {
        applied: Applied::Selected(mask),
        orthonormalized: o,
        scale,
    })
}

fn fresh_subspace(n: usize, r: usize, cfg: &OptimizerConfig, state: &ParamState) -> Result<Matrix> {
    let mut rng = Rng::for_step(cfg.seed.wrapping_add(SUBSPACE_SALT), state.id, state.step);
    // A Gaussian n×r block is full rank with probability one; retry a few
    // draws rather than trusting that blindly.
    let mut last = None;
    for _ in 0..4 {
        match gram_schmidt(&Matrix::gaussian(n, r, &mut rng)) {
            Ok(v) => return Ok(v),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Low-rank Dion baseline with error feedback.
///
/// `P = M·V`, `O = NS(P)·Vᵀ`, `M ← M − (1−μ)·P·Vᵀ`, then one amortized
/// power-iteration step `V ← orth(Mᵀ·P)` using the momentum before feedback.
/// A rank-deficient `Mᵀ·P` (e.g. zero momentum) re-draws `V`.
pub fn dion_baseline_step(
    w: &mut Matrix,
    g: &Matrix,
    state: &mut ParamState,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome> {
    check_inputs("dion_baseline_step", w, g, state)?;
    let (m, n) = w.shape();
    let v = match state.subspace.take() {
        Some(v) if v.rows() == n => v,
        _ => {
            let r = select_count(cfg.rank_fraction, m.min(n))?;
            fresh_subspace(n, r, cfg, state)?
        }
    };

    state.momentum.axpy(1.0, g)?;
    let p = matmul(&state.momentum, &v)?;
    let o = gemm(&newton_schulz_auto(&p, &cfg.ns_params)?, Op::N, &v, Op::T)?;
    let r_next = gemm(&state.momentum, Op::T, &p, Op::N)?;

    let captured = gemm(&p, Op::N, &v, Op::T)?;
    state.momentum.axpy(-(1.0 - cfg.mu), &captured)?;

    let scale = full_scale(cfg.eta, m, n);
    w.axpy(-scale, &o)?;

    let norm = r_next.frobenius_norm();
    let next_v = if norm > 0.0 && norm.is_finite() {
        gram_schmidt(&r_next.scaled(1.0 / norm))
    } else {
        Err(Error::Degenerate {
            op: "gram_schmidt",
            column: 0,
            norm,
        })
    };
    state.subspace = Some(match next_v {
        Ok(v) => v,
        Err(e) => {
            warn!(
                "dion baseline: reinitializing subspace for param {} at step {}: {e}",
                state.id, state.step
            );
            fresh_subspace(n, v.cols(), cfg, state)?
        }
    });
    state.step += 1;
    Ok(UpdateOutcome {
        applied: Applied::Full,
        orthonormalized: o,
        scale,
    })
}

/// Heavy-ball momentum SGD for parameters that are not matrices (biases).
pub fn momentum_sgd_step<T: Real>(
    w: &mut Matrix<T>,
    g: &Matrix<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome<T>> {
    check_inputs("momentum_sgd_step", w, g, state)?;
    state.momentum.scale_in_place(T::of(cfg.mu));
    state.momentum.axpy(T::one(), g)?;
    w.axpy(T::of(-cfg.eta), &state.momentum)?;
    state.step += 1;
    Ok(UpdateOutcome {
        applied: Applied::Full,
        orthonormalized: state.momentum.clone(),
        scale: cfg.eta,
    })
}

/// Runs the configured algorithm on one matrix parameter.
pub fn step(
    w: &mut Matrix,
    g: &Matrix,
    state: &mut ParamState,
    cfg: &OptimizerConfig,
) -> Result<UpdateOutcome> {
    match cfg.algorithm {
        Algorithm::Muon => muon_step(w, g, state, cfg),
        Algorithm::Dion2 => dion2_step(w, g, state, cfg),
        Algorithm::Dion2FullDecayAblation => dion2_fulldecay_step(w, g, state, cfg),
        Algorithm::DionBaseline => dion_baseline_step(w, g, state, cfg),
        Algorithm::MomentumSgd => momentum_sgd_step(w, g, state, cfg),
    }
}
