//! Small fully connected networks with hand-written backprop, the two
//! training losses, and closed-form test objectives with exact Hessians.

mod loss;
mod mlp;
mod objective;

use thiserror::Error;

pub use loss::{accuracy, mse, softmax_cross_entropy};
pub use mlp::{Activation, Layer, LayerGrads, MlpModel};
pub use objective::{objective_eval, Objective, ObjectiveEval, Quadratic};

use crate::tensor::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward called without a matching forward pass")]
    StaleCache,
    #[error("label {label} at row {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("a model needs at least one layer")]
    EmptyModel,
    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("matrix of shape {0:?} is not square")]
    NotSquare(Vec<usize>),
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },
}
