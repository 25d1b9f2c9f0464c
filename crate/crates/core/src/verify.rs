//! The invariant battery behind `dion2 verify`.
//!
//! Each suite checks one property against an independent oracle (naive
//! loops, Jacobi SVD, finite differences, a reference argsort) and reports
//! a single line. `Quick` keeps every matrix at 64 or below; `Full` adds
//! 256–512 oracle sizes and multi-seed training orderings.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{gram_schmidt, jacobi_svd, matmul, Matrix, Rng};
use crate::optim::{dion2_step, muon_step, Algorithm, OptimizerConfig, ParamState};
use crate::orthonorm::{newton_schulz_auto, rms_to_rms_norm, NewtonSchulzParams};
use crate::selection::{
    gather, l1_norms, scatter_update, select_l1, select_random, Axis, SelectionStrategy,
};
use crate::trainer::{loss_and_grads, run, Dataset, Param, RunConfig, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub millis: u128,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {:<24} {} ({} ms)",
            self.name, self.detail, self.millis
        )
    }
}

type SuiteFn = fn(Level, u64) -> std::result::Result<String, String>;

const SUITES: &[(&str, SuiteFn)] = &[
    ("matmul_oracle", matmul_oracle),
    ("svd_reconstruction", svd_reconstruction),
    ("ns_singular_band", ns_singular_band),
    ("ns_low_rank_commute", ns_low_rank_commute),
    ("select_l1_argsort", select_l1_argsort),
    ("select_random_counts", select_random_counts),
    ("scatter_untouched", scatter_untouched),
    ("muon_dion2_equivalence", muon_dion2_equivalence),
    ("dion2_sparsity", dion2_sparsity),
    ("update_norm", update_norm),
    ("finite_differences", finite_differences),
    ("convergence", convergence),
    ("training_orderings", training_orderings),
];

/// Runs every suite for `level` and returns one result per suite.
pub fn run_suites(level: Level, seed: u64) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .filter(|(name, _)| level == Level::Full || *name != "training_orderings")
        .map(|&(name, f)| {
            let start = Instant::now();
            let out = f(level, seed);
            let millis = start.elapsed().as_millis();
            match out {
                Ok(detail) => SuiteResult {
                    name,
                    passed: true,
                    detail,
                    millis,
                },
                Err(detail) => SuiteResult {
                    name,
                    passed: false,
                    detail,
                    millis,
                },
            }
        })
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Standard error of the difference of two independent sample means.
pub fn diff_se(a: &[f64], b: &[f64]) -> f64 {
    let (_, sa) = mean_se(a);
    let (_, sb) = mean_se(b);
    sa.hypot(sb)
}

/// `mean(a) ≤ mean(b)`, allowing `a` to exceed `b` by up to `k` standard
/// errors of the difference.
pub fn le_within(a: &[f64], b: &[f64], k: f64) -> bool {
    mean_se(a).0 - mean_se(b).0 <= k * diff_se(a, b)
}

/// Final reported training loss of `base` for each optimizer seed.
pub fn final_losses(base: &RunConfig, seeds: &[u64]) -> Result<Vec<f64>> {
    seeds
        .iter()
        .map(|&s| {
            let mut cfg = base.clone();
            cfg.optimizer.seed = s;
            cfg.eval_every = cfg.total_steps;
            let reports = run(&cfg)?;
            Ok(reports.last().map_or(f64::NAN, |r| r.train_loss))
        })
        .collect()
}

/// Central finite-difference gradients of the batch loss.
pub fn finite_difference_grads(
    task: &Task,
    params: &[Param],
    inputs: &crate::trainer::Batch,
    h: f64,
) -> Result<Vec<Matrix>> {
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let (r, c) = params[p].value.shape();
        let mut g = Matrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                let mut plus = params.to_vec();
                plus[p].value.as_mut_slice()[i * c + j] += h;
                let mut minus = params.to_vec();
                minus[p].value.as_mut_slice()[i * c + j] -= h;
                let lp = loss_and_grads(task, &plus, inputs)?.0;
                let lm = loss_and_grads(task, &minus, inputs)?.0;
                g.as_mut_slice()[i * c + j] = (lp - lm) / (2.0 * h);
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest entrywise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn e2s(e: crate::Error) -> String {
    e.to_string()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_sizes(level: Level) -> Vec<(usize, usize)> {
    let mut v = vec![(1, 1), (7, 3), (16, 16), (33, 64), (64, 48)];
    if level == Level::Full {
        v.extend([(256, 256), (300, 512), (512, 384)]);
    }
    v
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

fn matmul_oracle(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 1);
    let mut worst = 0.0_f64;
    for (m, n) in oracle_sizes(level) {
        let k = (m + n) / 2 + 1;
        let a = Matrix::gaussian(m, k, &mut rng);
        let b = Matrix::gaussian(k, n, &mut rng);
        let err = matmul(&a, &b)
            .map_err(e2s)?
            .max_abs_diff(&naive_matmul(&a, &b));
        worst = worst.max(err / (k as f64).sqrt());
    }
    check(worst <= 1e-13, || format!("scaled error {worst:e}"))?;
    Ok(format!("max scaled error {worst:.1e}"))
}

fn svd_reconstruction(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 2);
    let mut worst = 0.0_f64;
    for (m, n) in oracle_sizes(level) {
        let a = Matrix::gaussian(m, n, &mut rng);
        let svd = crate::linalg::jacobi_svd_full(&a).map_err(e2s)?;
        let us = Matrix::from_fn(m, svd.s.len(), |i, j| svd.u[(i, j)] * svd.s[j]);
        let back = matmul(&us, &svd.v.transpose()).map_err(e2s)?;
        worst = worst.max(back.max_abs_diff(&a));
    }
    check(worst <= 1e-10, || format!("reconstruction error {worst:e}"))?;
    Ok(format!("max reconstruction error {worst:.1e}"))
}

fn ns_shapes(level: Level, rng: &mut Rng, count: usize) -> Vec<(usize, usize)> {
    let cap = if level == Level::Full { 512 } else { 64 };
    let mut v: Vec<(usize, usize)> = (0..count)
        .map(|_| (1 + rng.below(cap), 1 + rng.below(cap)))
        .collect();
    if level == Level::Full {
        v.extend([(256, 256), (256, 512), (512, 256)]);
    }
    v
}

fn ns_singular_band(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 3);
    let p = NewtonSchulzParams::default();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for (m, n) in ns_shapes(level, &mut rng, 30) {
        let a = Matrix::gaussian(m, n, &mut rng);
        let s = jacobi_svd(&newton_schulz_auto(&a, &p).map_err(e2s)?).map_err(e2s)?;
        lo = lo.min(*s.last().unwrap_or(&1.0));
        hi = hi.max(s[0]);
    }
    check(lo >= 0.6 && hi <= 1.1, || {
        format!("singular values in [{lo}, {hi}]")
    })?;
    Ok(format!("singular values in [{lo:.4}, {hi:.4}]"))
}

/// Worst `|NS(M·V·Vᵀ) − NS(M·V)·Vᵀ|` over `pairs` random draws.
pub fn low_rank_commutation_error(
    rows: usize,
    cols: usize,
    rank: usize,
    pairs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let p = NewtonSchulzParams::default();
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let m = Matrix::gaussian(rows, cols, rng);
        let v = gram_schmidt(&Matrix::gaussian(cols, rank, rng))?;
        let mv = matmul(&m, &v)?;
        let lhs = newton_schulz_auto(&matmul(&mv, &v.transpose())?, &p)?;
        let rhs = matmul(&newton_schulz_auto(&mv, &p)?, &v.transpose())?;
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    Ok(worst)
}

fn ns_low_rank_commute(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 4);
    let pairs = if level == Level::Full { 50 } else { 10 };
    let a = low_rank_commutation_error(32, 32, 8, pairs, &mut rng).map_err(e2s)?;
    let b = low_rank_commutation_error(48, 16, 4, pairs, &mut rng).map_err(e2s)?;
    let worst = a.max(b);
    check(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

/// Indices of the `k` largest `norms`, lower index first on ties, sorted.
pub fn argsort_top_k(norms: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..norms.len()).collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn select_l1_argsort(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 5);
    let cases = if level == Level::Full { 1000 } else { 200 };
    for case in 0..cases {
        let (r, c) = (1 + rng.below(24), 1 + rng.below(24));
        // coarse integer entries so ties actually occur
        let m = Matrix::from_fn(r, c, |_, _| rng.below(5) as f64 - 2.0);
        let alpha = (1 + rng.below(100)) as f64 / 100.0;
        let axis = if rng.below(2) == 0 {
            Axis::Rows
        } else {
            Axis::Columns
        };
        let mask = select_l1(&m, alpha, axis).map_err(e2s)?;
        let norms = l1_norms(&m, axis);
        let want = argsort_top_k(&norms, mask.len());
        check(mask.indices() == want.as_slice(), || {
            format!("case {case}: got {:?}, want {want:?}", mask.indices())
        })?;
    }
    Ok(format!("{cases} cases agree"))
}

fn select_random_counts(level: Level, seed: u64) -> std::result::Result<String, String> {
    let (d, k, trials) = if level == Level::Full {
        (32, 8, 40_000)
    } else {
        (16, 4, 8_000)
    };
    let alpha = k as f64 / d as f64;
    let mut counts = vec![0u64; d];
    for t in 0..trials {
        let mut rng = Rng::for_step(seed, 11, t);
        let mask = select_random(alpha, d, Axis::Rows, &mut rng).map_err(e2s)?;
        check(mask.len() == k, || {
            format!("trial {t}: selected {}", mask.len())
        })?;
        for &i in mask.indices() {
            counts[i] += 1;
        }
    }
    let expected = (trials * k as u64) as f64 / d as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // dof = d − 1; the 99.9% quantile is below 2.5·dof for these sizes
    let limit = 2.5 * (d - 1) as f64;
    check(chi2 < limit, || format!("chi-square {chi2:.1} >= {limit}"))?;
    Ok(format!("chi-square {chi2:.1} (limit {limit})"))
}

fn scatter_untouched(_: Level, seed: u64) -> std::result::Result<String, String> {
    let mut rng = Rng::new(seed, 6);
    for case in 0..50 {
        let (r, c) = (2 + rng.below(40), 2 + rng.below(40));
        let axis = if case % 2 == 0 {
            Axis::Rows
        } else {
            Axis::Columns
        };
        let d = axis.len((r, c));
        let mask = select_random(0.3, d, axis, &mut rng).map_err(e2s)?;
        let w = Matrix::<f64>::gaussian(r, c, &mut rng);
        let sub = gather(&Matrix::gaussian(r, c, &mut rng), &mask).map_err(e2s)?;
        let mut after = w.clone();
        scatter_update(&mut after, &mask, &sub, 0.7).map_err(e2s)?;
        let sel = mask.selected();
        for i in 0..r {
            for j in 0..c {
                let chosen = sel[if axis == Axis::Rows { i } else { j }];
                if !chosen && after[(i, j)].to_bits() != w[(i, j)].to_bits() {
                    return Err(format!("case {case}: unselected ({i}, {j}) changed"));
                }
            }
        }
    }
    Ok("50 cases bitwise".into())
}

/// Max-abs weight difference between Muon and Dion2 at `alpha = 1` after
/// each of `steps` steps on `task`.
pub fn muon_equivalence_gap(task: &Task, selection: SelectionStrategy, steps: u64) -> Result<f64> {
    let ds = Dataset::new(task.clone())?;
    let mut wa = task.student(0);
    let mut wb = wa.clone();
    let mut sa = ParamState::for_param(0, &wa[0].value);
    let mut sb = sa.clone();
    let muon = OptimizerConfig::muon();
    let dion2 = OptimizerConfig::dion2(1.0, selection);
    let mut worst = 0.0_f64;
    for step in 0..steps {
        let batch = ds.batch(step);
        let ga = loss_and_grads(task, &wa, &batch)?.1;
        let gb = loss_and_grads(task, &wb, &batch)?.1;
        muon_step(&mut wa[0].value, &ga[0], &mut sa, &muon)?;
        dion2_step(&mut wb[0].value, &gb[0], &mut sb, &dion2)?;
        worst = worst.max(wa[0].value.max_abs_diff(&wb[0].value));
    }
    Ok(worst)
}

fn muon_dion2_equivalence(level: Level, _: u64) -> std::result::Result<String, String> {
    let task = if level == Level::Full {
        Task::linear(256, 128)
    } else {
        Task::linear(64, 32)
    };
    let mut worst = 0.0_f64;
    for sel in [SelectionStrategy::L1, SelectionStrategy::Random] {
        worst = worst.max(muon_equivalence_gap(&task, sel, 30).map_err(e2s)?);
    }
    check(worst <= 1e-9, || format!("max weight gap {worst:e}"))?;
    Ok(format!("max weight gap {worst:.1e}"))
}

/// Runs `steps` Dion2 steps and checks, after every step, that unselected
/// weights are bitwise unchanged and unselected momentum equals the
/// previous momentum plus the gradient exactly.
pub fn sparsity_contract(
    task: &Task,
    cfg: &OptimizerConfig,
    steps: u64,
) -> Result<std::result::Result<(), String>> {
    let ds = Dataset::new(task.clone())?;
    let mut params = task.student(cfg.seed);
    let mut state = ParamState::for_param(0, &params[0].value);
    for step in 0..steps {
        let g = loss_and_grads(task, &params, &ds.batch(step))?
            .1
            .swap_remove(0);
        let w_prev = params[0].value.clone();
        let mut m_expect = state.momentum.clone();
        m_expect.axpy(1.0, &g)?;
        let out = dion2_step(&mut params[0].value, &g, &mut state, cfg)?;
        let mask = out.applied.mask().expect("dion2 reports a mask");
        let sel = mask.selected();
        let (r, c) = w_prev.shape();
        for i in 0..r {
            for j in 0..c {
                if sel[if mask.axis() == Axis::Rows { i } else { j }] {
                    continue;
                }
                let w = &params[0].value;
                if w[(i, j)].to_bits() != w_prev[(i, j)].to_bits() {
                    return Ok(Err(format!("step {step}: weight ({i}, {j}) changed")));
                }
                if state.momentum[(i, j)].to_bits() != m_expect[(i, j)].to_bits() {
                    return Ok(Err(format!("step {step}: momentum ({i}, {j}) != M + g")));
                }
            }
        }
    }
    Ok(Ok(()))
}

fn dion2_sparsity(level: Level, seed: u64) -> std::result::Result<String, String> {
    let task = Task::linear(48, 24);
    let steps = if level == Level::Full { 100 } else { 30 };
    for sel in [SelectionStrategy::L1, SelectionStrategy::Random] {
        for axis in [Axis::Auto, Axis::Columns] {
            let mut cfg = OptimizerConfig::dion2(0.25, sel).with_seed(seed);
            cfg.axis = axis;
            sparsity_contract(&task, &cfg, steps).map_err(e2s)??;
        }
    }
    Ok(format!("{steps} steps x 4 configs bitwise"))
}

fn update_norm(level: Level, seed: u64) -> std::result::Result<String, String> {
    let task = Task::linear(64, 48);
    let ds = Dataset::new(task.clone()).map_err(e2s)?;
    let mut params = task.student(seed);
    let mut state = ParamState::for_param(0, &params[0].value);
    let steps = if level == Level::Full { 200 } else { 40 };
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for step in 0..steps {
        let g = loss_and_grads(&task, &params, &ds.batch(step))
            .map_err(e2s)?
            .1
            .swap_remove(0);
        let cfg = mixed_config(step, seed);
        let w = &mut params[0].value;
        let out = crate::optim::step(w, &g, &mut state, &cfg).map_err(e2s)?;
        let ratio =
            applied_update_norm(&out, w.shape(), cfg.submatrix_scale).map_err(e2s)? / cfg.eta;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    check(lo >= 0.6 && hi <= 1.1, || {
        format!("update norm / eta in [{lo}, {hi}]")
    })?;
    Ok(format!("update norm / eta in [{lo:.4}, {hi:.4}]"))
}

/// RMS→RMS norm of the update a step applied.
///
/// With full-matrix scaling this is the norm of the dense `rows×cols`
/// change to `W`. With `submatrix_scale` the scale was chosen for the
/// selected block, so the block `scale·O` is measured in its own shape.
pub fn applied_update_norm(
    out: &crate::optim::UpdateOutcome,
    shape: (usize, usize),
    submatrix_scale: bool,
) -> Result<f64> {
    if submatrix_scale && out.applied.mask().is_some() {
        Ok(rms_to_rms_norm(&out.orthonormalized.scaled(out.scale)))
    } else {
        Ok(rms_to_rms_norm(&out.delta(shape.0, shape.1)?))
    }
}

/// Cycles through the orthonormalizing algorithms, selection strategies,
/// fractions, scaling modes and learning rates, one configuration per step.
pub fn mixed_config(step: u64, seed: u64) -> OptimizerConfig {
    let alphas = [1.0, 0.5, 0.25, 0.125];
    let alpha = alphas[(step / 5 % 4) as usize];
    let mut cfg = match step % 5 {
        0 => OptimizerConfig::muon(),
        1 => OptimizerConfig::dion2(alpha, SelectionStrategy::L1),
        2 => OptimizerConfig::dion2(alpha, SelectionStrategy::Random),
        3 => OptimizerConfig::new(Algorithm::DionBaseline),
        _ => OptimizerConfig {
            alpha: 0.25,
            ..OptimizerConfig::new(Algorithm::Dion2FullDecayAblation)
        },
    };
    cfg.seed = seed;
    cfg.submatrix_scale = step / 20 % 2 == 1;
    cfg.eta = 0.02 * (1.0 - 0.9 * (step % 7) as f64 / 7.0);
    cfg
}

fn finite_differences(level: Level, seed: u64) -> std::result::Result<String, String> {
    let mut tasks = vec![
        Task::linear(6, 4).with_noise(0.1),
        Task::mlp(5, 8, 3).with_noise(0.05),
    ];
    if level == Level::Full {
        tasks.push(Task::mlp(12, 8, 6).with_noise(0.1));
    }
    let mut worst = 0.0_f64;
    for mut task in tasks {
        task.batch_size = 7;
        task.dataset_seed = seed;
        let ds = Dataset::new(task.clone()).map_err(e2s)?;
        let batch = ds.batch(1);
        let params = task.student(seed + 1);
        let grads = loss_and_grads(&task, &params, &batch).map_err(e2s)?.1;
        let fd = finite_difference_grads(&task, &params, &batch, 1e-5).map_err(e2s)?;
        for (g, f) in grads.iter().zip(&fd) {
            worst = worst.max(max_rel_err(g, f, 1e-6));
        }
    }
    check(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn convergence(level: Level, seed: u64) -> std::result::Result<String, String> {
    let task = Task::linear(64, 64).with_noise(0.0);
    let cfg = RunConfig::new(task, OptimizerConfig::muon().with_seed(seed), 500);
    let loss = final_losses(&cfg, &[seed]).map_err(e2s)?[0];
    check(loss < 1e-3, || format!("muon final loss {loss:e}"))?;
    if level == Level::Quick {
        return Ok(format!("muon 500-step loss {loss:.1e}"));
    }
    let mut worst = 0.0_f64;
    for task in [
        Task::linear(64, 64).with_noise(0.0),
        Task::mlp(8, 16, 4).with_noise(0.0),
    ] {
        for algo in [
            Algorithm::Muon,
            Algorithm::Dion2,
            Algorithm::Dion2FullDecayAblation,
            Algorithm::DionBaseline,
            Algorithm::MomentumSgd,
        ] {
            let opt = OptimizerConfig {
                alpha: 0.25,
                ..OptimizerConfig::new(algo)
            };
            let l =
                final_losses(&RunConfig::new(task.clone(), opt, 2000), &[seed]).map_err(e2s)?[0];
            check(l < 1e-2, || {
                format!("{} on {:?}: loss {l:e}", algo.name(), task.kind)
            })?;
            worst = worst.max(l);
        }
    }
    Ok(format!(
        "muon 500-step loss {loss:.1e}; worst 2000-step loss {worst:.1e}"
    ))
}

fn training_orderings(_: Level, _: u64) -> std::result::Result<String, String> {
    let seeds: Vec<u64> = (0..5).collect();
    let base = |opt| RunConfig::new(Task::default(), opt, 2000);
    let muon = final_losses(&base(OptimizerConfig::muon()), &seeds).map_err(e2s)?;
    let mut prev = muon;
    for alpha in [0.5, 0.25, 0.125] {
        let cur = final_losses(
            &base(OptimizerConfig::dion2(alpha, SelectionStrategy::L1)),
            &seeds,
        )
        .map_err(e2s)?;
        check(le_within(&prev, &cur, 2.0), || {
            format!(
                "ordering broken at alpha {alpha}: {:.4e} > {:.4e}",
                mean_se(&prev).0,
                mean_se(&cur).0
            )
        })?;
        prev = cur;
    }
    Ok("muon <= 0.5 <= 0.25 <= 0.125 within 2 SE".into())
}
