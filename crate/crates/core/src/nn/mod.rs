//! Small differentiable-computation core: tensors, a reverse-mode tape,
//! Adam with a step-decay schedule, finite-difference checking and a
//! binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, MAGIC};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use graph::{softmax, Axis, Graph, Var};
pub use optim::{adam_step, AdamState, DecayRule, LrSchedule};
pub use tensor::Tensor;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: dimension mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("function is not deterministic: {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform `±1/√fan_in` initialization.
pub fn init_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
