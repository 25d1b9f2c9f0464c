//! Desk-scale training harness: teacher-student regression tasks with exact
//! gradients, and a deterministic training loop that logs [`StepReport`]s.

mod run;
mod task;

pub use run::{
    run, write_reports_csv, RunConfig, StepOutput, StepReport, Trainer, REPORT_CSV_HEADER,
};
pub use task::{gen_batch, loss_and_grads, Batch, Dataset, Param, Task, TaskKind};
