//! Optimizer step-time micro-benchmark and a communication-volume model.
//!
//! The benchmark feeds synthetic Gaussian gradients to a single matrix
//! parameter and times only the optimizer step (selection, Newton–Schulz,
//! decay, scatter). Gradient generation happens outside the timed region.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real, Rng};
use crate::optim::{dion2_step, muon_step, OptimizerConfig, ParamState};
use crate::selection::{select_count, SelectionStrategy};

pub const BENCH_CSV_HEADER: &str = "algorithm,rows,cols,alpha,mean_step_ns,std_step_ns";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchAlgorithm {
    #[serde(rename = "muon")]
    Muon,
    #[serde(rename = "dion2-l1")]
    Dion2L1,
    #[serde(rename = "dion2-random")]
    Dion2Random,
}

impl BenchAlgorithm {
    pub const ALL: [BenchAlgorithm; 3] = [
        BenchAlgorithm::Muon,
        BenchAlgorithm::Dion2L1,
        BenchAlgorithm::Dion2Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchAlgorithm::Muon => "muon",
            BenchAlgorithm::Dion2L1 => "dion2-l1",
            BenchAlgorithm::Dion2Random => "dion2-random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    /// Timing-only kernels; never used for correctness checks.
    F32,
}

fn default_warmup() -> usize {
    80
}
fn default_measured() -> usize {
    20
}
fn default_repeats() -> usize {
    1
}
fn default_algorithms() -> Vec<BenchAlgorithm> {
    BenchAlgorithm::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// `(rows, cols)` pairs.
    pub dims: Vec<(usize, usize)>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_measured")]
    pub measured_steps: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<BenchAlgorithm>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub seed: u64,
    /// Run each repeat on its own thread with independent state.
    #[serde(default)]
    pub parallel_repeats: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![(1024, 1024)],
            alphas: vec![1.0, 0.5, 0.25, 0.125],
            warmup_steps: default_warmup(),
            measured_steps: default_measured(),
            repeats: default_repeats(),
            algorithms: default_algorithms(),
            precision: Precision::F64,
            seed: 0,
            parallel_repeats: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.measured_steps == 0 {
            return Err(Error::config("measured_steps", "must be >= 1"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be >= 1"));
        }
        if let Some(&a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::config(
                "alphas",
                format!("every alpha must be in (0, 1], got {a}"),
            ));
        }
        if let Some(&(r, c)) = self.dims.iter().find(|&&(r, c)| r == 0 || c == 0) {
            return Err(Error::config(
                "dims",
                format!("dimensions must be positive, got {r}x{c}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: String,
    pub rows: usize,
    pub cols: usize,
    pub alpha: f64,
    pub mean_step_ns: f64,
    pub std_step_ns: f64,
}

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.1},{:.1}",
            self.algorithm, self.rows, self.cols, self.alpha, self.mean_step_ns, self.std_step_ns
        )
    }
}

/// A [`BenchRow`] plus the mean step time of each repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSample {
    pub row: BenchRow,
    pub repeat_means_ns: Vec<f64>,
}

impl BenchSample {
    pub fn median_ns(&self) -> f64 {
        median(&self.repeat_means_ns)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Step-time rows for every `(dims, algorithm, alpha)` combination.
///
/// Muon ignores `alpha` and is reported once per shape with `alpha = 1`.
/// Row order: shapes as configured, then algorithms as configured, then
/// alphas as configured.
pub fn bench_step_time(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    Ok(bench_samples(cfg)?.into_iter().map(|s| s.row).collect())
}

pub fn bench_samples(cfg: &BenchConfig) -> Result<Vec<BenchSample>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &(rows, cols) in &cfg.dims {
        for &algo in &cfg.algorithms {
            let alphas: Vec<f64> = match algo {
                BenchAlgorithm::Muon if !cfg.alphas.is_empty() => vec![1.0],
                _ => cfg.alphas.clone(),
            };
            for alpha in alphas {
                out.push(match cfg.precision {
                    Precision::F64 => bench_one::<f64>(cfg, algo, rows, cols, alpha)?,
                    Precision::F32 => bench_one::<f32>(cfg, algo, rows, cols, alpha)?,
                });
            }
        }
    }
    Ok(out)
}

fn bench_one<T: Real>(
    cfg: &BenchConfig,
    algo: BenchAlgorithm,
    rows: usize,
    cols: usize,
    alpha: f64,
) -> Result<BenchSample> {
    let opt = match algo {
        BenchAlgorithm::Muon => OptimizerConfig::muon(),
        BenchAlgorithm::Dion2L1 => OptimizerConfig::dion2(alpha, SelectionStrategy::L1),
        BenchAlgorithm::Dion2Random => OptimizerConfig::dion2(alpha, SelectionStrategy::Random),
    }
    .with_seed(cfg.seed);

    let per_repeat = |repeat: usize| timed_repeat::<T>(cfg, &opt, algo, rows, cols, repeat);
    let timings: Vec<Vec<f64>> = if cfg.parallel_repeats && cfg.repeats > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.repeats)
                .map(|r| s.spawn(move || per_repeat(r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("benchmark thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..cfg.repeats)
            .map(per_repeat)
            .collect::<Result<Vec<_>>>()?
    };

    let all: Vec<f64> = timings.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&all);
    Ok(BenchSample {
        row: BenchRow {
            algorithm: algo.name().to_owned(),
            rows,
            cols,
            alpha,
            mean_step_ns: mean,
            std_step_ns: std,
        },
        repeat_means_ns: timings.iter().map(|t| mean_std(t).0).collect(),
    })
}

fn timed_repeat<T: Real>(
    cfg: &BenchConfig,
    opt: &OptimizerConfig,
    algo: BenchAlgorithm,
    rows: usize,
    cols: usize,
    repeat: usize,
) -> Result<Vec<f64>> {
    let mut rng = Rng::new(cfg.seed, repeat as u64);
    let mut w =
        Matrix::<T>::gaussian(rows, cols, &mut rng).scaled(T::of(1.0 / (cols as f64).sqrt()));
    let mut state = ParamState::<T>::for_param(0, &w);
    let mut times = Vec::with_capacity(cfg.measured_steps);
    for step in 0..cfg.warmup_steps + cfg.measured_steps {
        let g = Matrix::<T>::gaussian(rows, cols, &mut rng);
        let start = Instant::now();
        match algo {
            BenchAlgorithm::Muon => muon_step(&mut w, &g, &mut state, opt)?,
            _ => dion2_step(&mut w, &g, &mut state, opt)?,
        };
        let ns = start.elapsed().as_nanos() as f64;
        if step >= cfg.warmup_steps {
            times.push(ns);
        }
    }
    Ok(times)
}

pub fn write_bench_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    FullMomentum,
    SelectedSubmatrix,
}

/// Bytes one data-parallel worker sends to synchronize one matrix's
/// optimizer input.
///
/// `SelectedSubmatrix` sends the `k×longer` submatrix selected along the
/// shorter side. ℓ1 selection also ships the `k` chosen indices (8 bytes
/// each); random selection from a shared seed needs no indices.
pub fn comm_volume(
    rows: usize,
    cols: usize,
    alpha: f64,
    bytes_per_elem: usize,
    sync: SyncMode,
    selection: SelectionStrategy,
) -> Result<u64> {
    if rows == 0 || cols == 0 {
        return Err(Error::config("dims", "dimensions must be positive"));
    }
    let bytes = bytes_per_elem as u64;
    Ok(match sync {
        SyncMode::FullMomentum => (rows * cols) as u64 * bytes,
        SyncMode::SelectedSubmatrix => {
            let (short, long) = (rows.min(cols), rows.max(cols));
            let k = select_count(alpha, short)? as u64;
            let payload = k * long as u64 * bytes;
            match selection {
                SelectionStrategy::L1 => payload + 8 * k,
                SelectionStrategy::Random => payload,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comm_examples() {
        use SelectionStrategy::*;
        use SyncMode::*;
        assert_eq!(
            comm_volume(1024, 1024, 0.25, 4, SelectedSubmatrix, Random).unwrap(),
            1_048_576
        );
        assert_eq!(
            comm_volume(1024, 1024, 1.0, 4, FullMomentum, L1).unwrap(),
            4_194_304
        );
        let r = comm_volume(512, 2048, 0.125, 2, SelectedSubmatrix, Random).unwrap();
        let l = comm_volume(512, 2048, 0.125, 2, SelectedSubmatrix, L1).unwrap();
        assert_eq!(l, r + 64 * 8);
        assert!(matches!(
            comm_volume(8, 8, 0.0, 4, SelectedSubmatrix, L1),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn comm_ratio_is_selected_fraction() {
        for &(r, c, a) in &[(300, 700, 0.25), (1024, 256, 0.5), (64, 64, 0.125)] {
            let full = comm_volume(
                r,
                c,
                1.0,
                4,
                SyncMode::FullMomentum,
                SelectionStrategy::Random,
            )
            .unwrap();
            let sel = comm_volume(
                r,
                c,
                a,
                4,
                SyncMode::SelectedSubmatrix,
                SelectionStrategy::Random,
            )
            .unwrap();
            let k = select_count(a, r.min(c)).unwrap() as u64;
            assert_eq!(sel * r.min(c) as u64, full * k);
        }
    }

    #[test]
    fn empty_dims_empty_output() {
        let cfg = BenchConfig {
            dims: vec![],
            ..BenchConfig::default()
        };
        assert!(bench_step_time(&cfg).unwrap().is_empty());
    }

    #[test]
    fn small_bench_schema() {
        let cfg = BenchConfig {
            dims: vec![(16, 32), (8, 8)],
            alphas: vec![1.0, 0.5],
            warmup_steps: 1,
            measured_steps: 2,
            repeats: 2,
            parallel_repeats: true,
            ..BenchConfig::default()
        };
        let rows = bench_step_time(&cfg).unwrap();
        let keys: Vec<(String, usize, f64)> = rows
            .iter()
            .map(|r| (r.algorithm.clone(), r.rows, r.alpha))
            .collect();
        assert_eq!(keys.len(), 10);
        assert_eq!(keys[0], ("muon".into(), 16, 1.0));
        assert_eq!(keys[1], ("dion2-l1".into(), 16, 1.0));
        assert_eq!(keys[2], ("dion2-l1".into(), 16, 0.5));
        assert_eq!(keys[4], ("dion2-random".into(), 16, 0.5));
        assert!(rows
            .iter()
            .all(|r| r.mean_step_ns >= 0.0 && r.std_step_ns >= 0.0));
    }

    #[test]
    fn f32_precision_runs() {
        let cfg = BenchConfig {
            dims: vec![(8, 12)],
            alphas: vec![0.5],
            warmup_steps: 0,
            measured_steps: 1,
            algorithms: vec![BenchAlgorithm::Dion2Random],
            precision: Precision::F32,
            ..BenchConfig::default()
        };
        assert_eq!(bench_step_time(&cfg).unwrap().len(), 1);
    }

    #[test]
    fn validation() {
        let cfg = BenchConfig {
            measured_steps: 0,
            ..BenchConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BenchConfig {
            alphas: vec![1.5],
            ..BenchConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
