//! Adaptive gradient regularization (AGR) for first-order optimizers.
//!
//! * [`tensor`]: dense `f64` tensors and seeded random fills.
//! * [`agr`]: the AGR operator, its coefficients, and the role/epoch gate.
//! * [`optim`]: SGD, SGDM, Adam, AdamW, Adan and RMSprop with an AGR switch
//!   plus clipping and centralization baselines.
//! * [`nn`]: a small MLP with analytic gradients and closed-form objectives.
//! * [`verify`]: randomized and finite-difference checks of AGR's
//!   contraction, Hessian-bound and learning-rate properties.

pub mod agr;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod verify;

pub use agr::{
    compute_coefficients, effective_rate_view, regularize, should_apply, AgrCoefficients,
    AgrSchedule, ParamRole,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind, ParamRef};
pub use tensor::DenseTensor;
