use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::task::{loss_and_grads, Dataset, Param, Task};
use crate::error::{Error, Result};
use crate::optim::{
    lr_schedule, momentum_sgd_step, step as optimizer_step, OptimizerConfig, ParamState,
    UpdateOutcome,
};

pub const REPORT_CSV_HEADER: &str = "step,train_loss,lr,optimizer_time_ns,selected_fraction";

fn default_total_steps() -> u64 {
    2000
}
fn default_eval_every() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Task,
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    /// Output file name for the step log, relative to the output directory.
    #[serde(default)]
    pub log_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(task: Task, optimizer: OptimizerConfig, total_steps: u64) -> Self {
        Self {
            task,
            optimizer,
            total_steps,
            eval_every: default_eval_every(),
            log_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.optimizer.validate()?;
        if self.total_steps < 4 {
            return Err(Error::config(
                "total_steps",
                format!("must be >= 4, got {}", self.total_steps),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// One logged training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    /// Batch loss before the update.
    pub train_loss: f64,
    pub lr: f64,
    pub optimizer_time_ns: u64,
    /// Mean fraction of rows/columns updated across matrix parameters.
    pub selected_fraction: f64,
}

impl StepReport {
    /// CSV row with 17 significant digits per float.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{:.16e}",
            self.step, self.train_loss, self.lr, self.optimizer_time_ns, self.selected_fraction
        )
    }
}

pub fn write_reports_csv<W: Write>(mut out: W, reports: &[StepReport]) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Everything one training step produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub optimizer_time_ns: u64,
    /// One outcome per parameter, in parameter order.
    pub outcomes: Vec<UpdateOutcome>,
}

impl StepOutput {
    pub fn selected_fraction(&self, params: &[Param]) -> f64 {
        let fracs: Vec<f64> = params
            .iter()
            .zip(&self.outcomes)
            .filter(|(p, _)| p.is_matrix)
            .map(|(_, o)| o.applied.fraction())
            .collect();
        if fracs.is_empty() {
            1.0
        } else {
            fracs.iter().sum::<f64>() / fracs.len() as f64
        }
    }
}

/// Stepwise training loop. [`run`] drives it to completion; tests use it to
/// inspect parameters and optimizer state between steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: RunConfig,
    dataset: Dataset,
    params: Vec<Param>,
    states: Vec<ParamState>,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let dataset = Dataset::new(cfg.task.clone())?;
        let params = cfg.task.student(cfg.optimizer.seed);
        let states = params
            .iter()
            .enumerate()
            .map(|(i, p)| ParamState::for_param(i as u64, &p.value))
            .collect();
        Ok(Self {
            cfg,
            dataset,
            params,
            states,
            step: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn states(&self) -> &[ParamState] {
        &self.states
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.total_steps
    }

    /// Runs one step: batch, loss and gradients, then the optimizer on every
    /// parameter. Only the optimizer calls are timed.
    pub fn step(&mut self) -> Result<StepOutput> {
        let step = self.step;
        let batch = self.dataset.batch(step);
        let (loss, grads) =
            loss_and_grads(&self.cfg.task, &self.params, &batch).map_err(|e| with_step(e, step))?;
        let lr = lr_schedule(step, self.cfg.total_steps, self.cfg.optimizer.eta);
        let opt = OptimizerConfig {
            eta: lr,
            ..self.cfg.optimizer.clone()
        };

        let start = Instant::now();
        let mut outcomes = Vec::with_capacity(self.params.len());
        for ((p, g), st) in self.params.iter_mut().zip(&grads).zip(&mut self.states) {
            let out = if p.is_matrix {
                optimizer_step(&mut p.value, g, st, &opt)
            } else {
                momentum_sgd_step(&mut p.value, g, st, &opt)
            };
            outcomes.push(out.map_err(|e| with_step(e, step))?);
        }
        let optimizer_time_ns = start.elapsed().as_nanos() as u64;

        self.step += 1;
        Ok(StepOutput {
            step,
            loss,
            lr,
            optimizer_time_ns,
            outcomes,
        })
    }
}

fn with_step(e: Error, step: u64) -> Error {
    match e {
        Error::Numerical { op, detail } if !detail.contains("step") => Error::Numerical {
            op,
            detail: format!("{detail} (step {step})"),
        },
        other => other,
    }
}

/// Trains for `total_steps` and returns one report every `eval_every` steps
/// plus the final step.
pub fn run(cfg: &RunConfig) -> Result<Vec<StepReport>> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut reports = Vec::new();
    while !trainer.is_done() {
        let out = trainer.step()?;
        let last = out.step + 1 == cfg.total_steps;
        if out.step % cfg.eval_every == 0 || last {
            reports.push(StepReport {
                step: out.step,
                train_loss: out.loss,
                lr: out.lr,
                optimizer_time_ns: out.optimizer_time_ns,
                selected_fraction: out.selected_fraction(trainer.params()),
            });
        }
    }
    Ok(reports)
}
