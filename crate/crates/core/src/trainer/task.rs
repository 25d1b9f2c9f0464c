use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, matmul, Matrix, Op, Rng};

const TEACHER_STREAM: u64 = 0x7EAC_4E12;
const BATCH_STREAM: u64 = 0xBA7C_4000;
const STUDENT_STREAM: u64 = 0x57D_E177;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `y = W*·x + noise`, student is a single matrix.
    TeacherStudentLinear,
    /// `y = W2·tanh(W1·x + b1) + noise`, student has the same architecture.
    TwoLayerMlp,
}

/// Synthetic regression task.
///
/// `dims` lists layer widths from input to output: `[d_in, d_out]` for the
/// linear task and `[d_in, hidden, d_out]` for the MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub kind: TaskKind,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub dataset_seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub noise_std: f64,
}

fn default_batch() -> usize {
    64
}

impl Default for Task {
    /// The fixed benchmark task: a 128×256 teacher, batch 64, noise 0.01.
    fn default() -> Self {
        Self {
            kind: TaskKind::TeacherStudentLinear,
            dims: vec![256, 128],
            dataset_seed: 0,
            batch_size: 64,
            noise_std: 0.01,
        }
    }
}

impl Task {
    pub fn linear(d_in: usize, d_out: usize) -> Self {
        Self {
            kind: TaskKind::TeacherStudentLinear,
            dims: vec![d_in, d_out],
            ..Self::default()
        }
    }

    pub fn mlp(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            kind: TaskKind::TwoLayerMlp,
            dims: vec![d_in, hidden, d_out],
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn with_seed(mut self, dataset_seed: u64) -> Self {
        self.dataset_seed = dataset_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let want = match self.kind {
            TaskKind::TeacherStudentLinear => 2,
            TaskKind::TwoLayerMlp => 3,
        };
        if self.dims.len() != want {
            return Err(Error::config(
                "task.dims",
                format!(
                    "{:?} needs {want} widths, got {}",
                    self.kind,
                    self.dims.len()
                ),
            ));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::config(
                "task.dims",
                format!("every width must be >= 2, got {d}"),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("task.batch_size", "must be >= 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("task.noise_std", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn init_params(&self, rng: &mut Rng, bias_std: f64) -> Vec<Param> {
        let layer = |rng: &mut Rng, name: &str, fan_out: usize, fan_in: usize| {
            Param::matrix(
                name,
                Matrix::gaussian(fan_out, fan_in, rng).scaled(1.0 / (fan_in as f64).sqrt()),
            )
        };
        match self.kind {
            TaskKind::TeacherStudentLinear => vec![layer(rng, "w", self.dims[1], self.dims[0])],
            TaskKind::TwoLayerMlp => {
                let (d_in, h, d_out) = (self.dims[0], self.dims[1], self.dims[2]);
                let w1 = layer(rng, "w1", h, d_in);
                let b1 = Param::vector("b1", Matrix::gaussian(h, 1, rng).scaled(bias_std));
                let w2 = layer(rng, "w2", d_out, h);
                vec![w1, b1, w2]
            }
        }
    }

    /// Shapes of the student's parameters, in order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match self.kind {
            TaskKind::TeacherStudentLinear => vec![(self.dims[1], self.dims[0])],
            TaskKind::TwoLayerMlp => vec![
                (self.dims[1], self.dims[0]),
                (self.dims[1], 1),
                (self.dims[2], self.dims[1]),
            ],
        }
    }

    /// The fixed teacher network for this task's dataset seed.
    pub fn teacher(&self) -> Vec<Param> {
        self.init_params(&mut Rng::new(self.dataset_seed, TEACHER_STREAM), 0.1)
    }

    /// A freshly initialized student: Gaussian / sqrt(fan-in), zero biases.
    pub fn student(&self, seed: u64) -> Vec<Param> {
        self.init_params(&mut Rng::new(seed, STUDENT_STREAM), 0.0)
    }
}

/// One named trainable tensor. Vectors are stored as `n×1` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub is_matrix: bool,
}

impl Param {
    pub fn matrix(name: &str, value: Matrix) -> Self {
        Self {
            name: name.to_owned(),
            value,
            is_matrix: true,
        }
    }

    pub fn vector(name: &str, value: Matrix) -> Self {
        Self {
            name: name.to_owned(),
            value,
            is_matrix: false,
        }
    }
}

/// Inputs (`d_in×B`, columns at unit RMS) and targets (`d_out×B`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

/// A task together with its teacher; produces deterministic batches.
#[derive(Debug, Clone)]
pub struct Dataset {
    task: Task,
    teacher: Vec<Param>,
}

impl Dataset {
    pub fn new(task: Task) -> Result<Self> {
        task.validate()?;
        let teacher = task.teacher();
        Ok(Self { task, teacher })
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn teacher(&self) -> &[Param] {
        &self.teacher
    }

    /// The batch for `step`, a pure function of `(task, step)`.
    pub fn batch(&self, step: u64) -> Batch {
        let mut rng = Rng::for_step(self.task.dataset_seed, BATCH_STREAM, step);
        gen_batch(&self.task, &self.teacher, &mut rng)
    }
}

/// Draws a batch from `rng`: Gaussian inputs rescaled so every column has
/// unit RMS, and teacher outputs plus `noise_std` Gaussian noise.
pub fn gen_batch(task: &Task, teacher: &[Param], rng: &mut Rng) -> Batch {
    let d_in = task.dims[0];
    let b = task.batch_size;
    let mut inputs = Matrix::<f64>::gaussian(d_in, b, rng);
    for j in 0..b {
        let ms = (0..d_in).map(|i| inputs[(i, j)].powi(2)).sum::<f64>() / d_in as f64;
        let inv = 1.0 / ms.sqrt();
        for i in 0..d_in {
            inputs[(i, j)] *= inv;
        }
    }
    let mut targets = forward(task.kind, teacher, &inputs).output;
    if task.noise_std > 0.0 {
        for y in targets.as_mut_slice() {
            *y += task.noise_std * rng.normal();
        }
    }
    Batch { inputs, targets }
}

struct Forward {
    hidden: Option<Matrix>,
    output: Matrix,
}

fn forward(kind: TaskKind, params: &[Param], x: &Matrix) -> Forward {
    match kind {
        TaskKind::TeacherStudentLinear => Forward {
            hidden: None,
            output: matmul(&params[0].value, x).expect("shapes checked"),
        },
        TaskKind::TwoLayerMlp => {
            let mut z = matmul(&params[0].value, x).expect("shapes checked");
            let bias = params[1].value.as_slice();
            for (i, &bi) in bias.iter().enumerate() {
                z.row_mut(i).iter_mut().for_each(|v| *v = (*v + bi).tanh());
            }
            let output = matmul(&params[2].value, &z).expect("shapes checked");
            Forward {
                hidden: Some(z),
                output,
            }
        }
    }
}

fn check_shapes(task: &Task, params: &[Param], batch: &Batch) -> Result<()> {
    let expected = task.param_shapes();
    let ok = params.len() == expected.len()
        && params
            .iter()
            .zip(&expected)
            .all(|(p, &e)| p.value.shape() == e)
        && batch.inputs.rows() == task.dims[0]
        && batch.targets.rows() == *task.dims.last().unwrap()
        && batch.inputs.cols() == batch.targets.cols();
    if ok {
        Ok(())
    } else {
        Err(Error::shape(
            "loss_and_grads",
            "parameters or batch do not match the task",
        ))
    }
}

/// Mean squared error over all outputs in the batch, and its exact gradient
/// with respect to every parameter.
pub fn loss_and_grads(task: &Task, params: &[Param], batch: &Batch) -> Result<(f64, Vec<Matrix>)> {
    check_shapes(task, params, batch)?;
    let fwd = forward(task.kind, params, &batch.inputs);
    let resid = fwd.output.sub(&batch.targets)?;
    let count = resid.as_slice().len() as f64;
    let loss = resid.as_slice().iter().map(|r| r * r).sum::<f64>() / count;
    if !loss.is_finite() {
        return Err(Error::numerical(
            "loss_and_grads",
            format!("loss is {loss}"),
        ));
    }
    // dL/dŶ
    let d_out = resid.scaled(2.0 / count);
    let grads = match task.kind {
        TaskKind::TeacherStudentLinear => vec![gemm(&d_out, Op::N, &batch.inputs, Op::T)?],
        TaskKind::TwoLayerMlp => {
            let h = fwd.hidden.expect("mlp has a hidden layer");
            let dw2 = gemm(&d_out, Op::N, &h, Op::T)?;
            let mut dz = gemm(&params[2].value, Op::T, &d_out, Op::N)?;
            for (d, &a) in dz.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *d *= 1.0 - a * a;
            }
            let dw1 = gemm(&dz, Op::N, &batch.inputs, Op::T)?;
            let db1 = Matrix::from_fn(dz.rows(), 1, |i, _| dz.row(i).iter().sum());
            vec![dw1, db1, dw2]
        }
    };
    Ok((loss, grads))
}
