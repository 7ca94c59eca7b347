//! Optimizers with an AGR switch.
//!
//! Each [`Optimizer`] owns per-parameter slots and applies, per step:
//!
//! 1. weight-decay coupling (`g + lambda * theta`) for every kind but Adan,
//! 2. optional clipping by the global L2 norm over all parameters,
//! 3. optional centralization (weights only),
//! 4. AGR where [`should_apply`] allows it,
//!
//! and then the kind-specific update. AGR only ever feeds the first-moment
//! path; second-moment accumulators (`v` in Adam/AdamW/RMSprop, `n` in
//! Adan) always see the pre-AGR gradient.

mod config;
mod kernels;
mod probe;

use thiserror::Error;

pub use config::{OptimizerConfig, OptimizerKind};
pub use probe::{MomentInputs, MomentRecord, RecordingProbe, StepProbe};

use crate::agr::{regularize_in_place, should_apply, ParamRole};
use crate::tensor::{l1_norm, DenseTensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("optimizer was initialized with {expected} parameters, got {got}")]
    ParamCountChanged { expected: usize, got: usize },
    #[error("parameter {index} changed shape from {expected:?} to {got:?}")]
    ShapeChanged {
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

/// One parameter tensor, its gradient, and its role.
pub struct ParamRef<'a> {
    pub value: &'a mut DenseTensor,
    pub grad: &'a DenseTensor,
    pub role: ParamRole,
}

impl<'a> ParamRef<'a> {
    pub fn new(value: &'a mut DenseTensor, grad: &'a DenseTensor, role: ParamRole) -> Self {
        Self { value, grad, role }
    }
}

/// Moment slots for one parameter. Unused slots stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub m: DenseTensor,
    pub v: DenseTensor,
    pub n: DenseTensor,
    /// Adan's raw `g_{k-1}`; `None` until the first Adan step.
    pub prev_grad: Option<DenseTensor>,
    prev_regularized: Vec<f64>,
    scratch: Vec<f64>,
}

impl SlotState {
    fn new(shape: &[usize]) -> Result<Self, OptimError> {
        let z = DenseTensor::zeros(shape)?;
        Ok(Self {
            m: z.clone(),
            v: z.clone(),
            n: z,
            prev_grad: None,
            prev_regularized: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        self.m.shape()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    /// Number of completed `step` calls.
    pub step: u64,
    /// Adan's `k`: steps since initialization or the last restart.
    pub adan_k: u64,
    pub slots: Vec<SlotState>,
    /// Running count of tensors AGR was applied to.
    pub regularized_total: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Tensors that went through AGR this step.
    pub regularized: usize,
}

type RestartCondition = Box<dyn FnMut(u64) -> bool + Send>;

pub struct Optimizer {
    config: OptimizerConfig,
    state: OptimizerState,
    schedule_multiplier: f64,
    probe: Option<Box<dyn StepProbe>>,
    restart: Option<RestartCondition>,
}

impl std::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optimizer")
            .field("config", &self.config)
            .field("state", &self.state)
            .field("schedule_multiplier", &self.schedule_multiplier)
            .field("probe", &self.probe.is_some())
            .field("restart", &self.restart.is_some())
            .finish()
    }
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self, OptimError> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptimizerState::default(),
            schedule_multiplier: 1.0,
            probe: None,
            restart: None,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut OptimizerState {
        &mut self.state
    }

    /// Learning-rate schedule multiplier (AdamW's `eta_t`; a plain factor on
    /// `lr` for the other kinds). Defaults to 1.
    pub fn set_schedule_multiplier(&mut self, multiplier: f64) {
        self.schedule_multiplier = multiplier;
    }

    pub fn set_probe(&mut self, probe: Box<dyn StepProbe>) {
        self.probe = Some(probe);
    }

    pub fn clear_probe(&mut self) {
        self.probe = None;
    }

    /// Adan restart predicate, called with the step count after each Adan
    /// step. When it returns true the next gradient is treated as a fresh
    /// `g_0`. Ignored by the other kinds.
    pub fn set_restart_condition(&mut self, condition: impl FnMut(u64) -> bool + Send + 'static) {
        self.restart = Some(Box::new(condition));
    }

    /// Allocates slots for the given parameter shapes if none exist yet.
    pub fn init_slots(&mut self, shapes: &[&[usize]]) -> Result<(), OptimError> {
        if self.state.slots.is_empty() {
            self.state.slots = shapes
                .iter()
                .map(|s| SlotState::new(s))
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    fn check_params(&mut self, params: &[ParamRef<'_>]) -> Result<(), OptimError> {
        for p in params {
            p.value.same_shape(p.grad)?;
        }
        if self.state.slots.is_empty() {
            let shapes: Vec<&[usize]> = params.iter().map(|p| p.value.shape()).collect();
            return self.init_slots(&shapes);
        }
        if self.state.slots.len() != params.len() {
            return Err(OptimError::ParamCountChanged {
                expected: self.state.slots.len(),
                got: params.len(),
            });
        }
        for (index, (slot, p)) in self.state.slots.iter().zip(params).enumerate() {
            if slot.shape() != p.value.shape() {
                return Err(OptimError::ShapeChanged {
                    index,
                    expected: slot.shape().to_vec(),
                    got: p.value.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Convenience wrapper for a single tensor.
    pub fn step_single(
        &mut self,
        value: &mut DenseTensor,
        grad: &DenseTensor,
        role: ParamRole,
        epoch: u64,
    ) -> Result<StepOutcome, OptimError> {
        self.step(&mut [ParamRef::new(value, grad, role)], epoch)
    }

    pub fn step(&mut self, params: &mut [ParamRef<'_>], epoch: u64) -> Result<StepOutcome, OptimError> {
        self.check_params(params)?;
        let cfg = &self.config;
        let kind = cfg.kind;
        self.state.step += 1;
        let step = self.state.step;

        // Base gradients (with coupled weight decay) into per-slot scratch.
        let couple = kind.couples_decay_into_gradient() && cfg.weight_decay != 0.0;
        for (slot, p) in self.state.slots.iter_mut().zip(params.iter()) {
            slot.scratch.clear();
            if couple {
                let wd = cfg.weight_decay;
                slot.scratch.extend(
                    p.grad
                        .data()
                        .iter()
                        .zip(p.value.data())
                        .map(|(&g, &w)| g + wd * w),
                );
            } else {
                slot.scratch.extend_from_slice(p.grad.data());
            }
        }

        if let Some(clip) = cfg.clip_norm {
            let sq: f64 = self
                .state
                .slots
                .iter()
                .map(|s| s.scratch.iter().map(|x| x * x).sum::<f64>())
                .sum();
            let scale = clip_scale(sq.sqrt(), clip);
            if scale < 1.0 {
                for slot in &mut self.state.slots {
                    slot.scratch.iter_mut().for_each(|x| *x *= scale);
                }
            }
        }

        if cfg.centralize {
            for (slot, p) in self.state.slots.iter_mut().zip(params.iter()) {
                if p.role.is_weight() {
                    centralize(&mut slot.scratch);
                }
            }
        }

        let eta = cfg.lr * self.schedule_multiplier;
        let mut outcome = StepOutcome::default();
        for (index, (slot, p)) in self.state.slots.iter_mut().zip(params.iter_mut()).enumerate() {
            let apply = should_apply(p.role, &cfg.agr, epoch);
            let agr_l1 = if apply {
                outcome.regularized += 1;
                let l1 = l1_norm(&slot.scratch);
                (l1 > 0.0).then_some(l1)
            } else {
                None
            };

            if let Some(probe) = self.probe.as_mut() {
                record_inputs(probe.as_mut(), cfg, self.state.adan_k, step, index, apply, slot);
            }

            let g = &slot.scratch;
            let w = p.value.data_mut();
            match kind {
                OptimizerKind::Sgd => kernels::sgd(w, g, agr_l1, eta),
                OptimizerKind::Sgdm => {
                    kernels::sgdm(w, g, agr_l1, slot.m.data_mut(), eta, cfg.beta1, cfg.dampening)
                }
                OptimizerKind::Adam | OptimizerKind::Adamw => {
                    let params = kernels::AdamParams {
                        lr: cfg.lr,
                        schedule: self.schedule_multiplier,
                        beta1: cfg.beta1,
                        beta2: cfg.beta2,
                        eps: cfg.eps,
                        weight_decay: cfg.weight_decay,
                        step,
                        decoupled: kind == OptimizerKind::Adamw,
                    };
                    kernels::adam(w, g, agr_l1, slot.m.data_mut(), slot.v.data_mut(), &params)
                }
                OptimizerKind::Rmsprop => {
                    kernels::rmsprop(w, g, agr_l1, slot.v.data_mut(), eta, cfg.beta2, cfg.eps)
                }
                OptimizerKind::Adan => {
                    let len = g.len();
                    let shape = slot.m.shape().to_vec();
                    let prev = slot
                        .prev_grad
                        .get_or_insert_with(|| DenseTensor::zeros(&shape).expect("shape checked"));
                    if cfg.adan_v_uses_regularized_prev && slot.prev_regularized.len() != len {
                        slot.prev_regularized = vec![0.0; len];
                    }
                    let params = kernels::AdanParams {
                        eta,
                        beta1: cfg.beta1,
                        beta2: cfg.beta2,
                        beta3: cfg.beta3,
                        eps: cfg.eps,
                        weight_decay: cfg.weight_decay,
                        k: self.state.adan_k,
                        regularized_prev: cfg.adan_v_uses_regularized_prev,
                    };
                    let slots = kernels::AdanSlots {
                        m: slot.m.data_mut(),
                        v: slot.v.data_mut(),
                        n: slot.n.data_mut(),
                        prev: prev.data_mut(),
                        prev_regularized: &mut slot.prev_regularized,
                    };
                    kernels::adan(w, g, agr_l1, slots, &params)
                }
            }
        }

        if kind == OptimizerKind::Adan {
            self.state.adan_k += 1;
            if let Some(restart) = self.restart.as_mut() {
                if restart(step) {
                    self.state.adan_k = 0;
                }
            }
        }
        self.state.regularized_total += outcome.regularized as u64;
        Ok(outcome)
    }
}

fn clip_scale(norm: f64, clip: f64) -> f64 {
    if norm > clip {
        clip / norm
    } else {
        1.0
    }
}

fn centralize(values: &mut [f64]) {
    if values.len() > 1 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|x| *x -= mean);
    }
}

fn record_inputs(
    probe: &mut dyn StepProbe,
    cfg: &OptimizerConfig,
    adan_k: u64,
    step: u64,
    param: usize,
    apply: bool,
    slot: &SlotState,
) {
    let raw = &slot.scratch;
    let mut first = raw.clone();
    if apply {
        regularize_in_place(&mut first);
    }
    let second: Vec<f64> = match cfg.kind {
        OptimizerKind::Sgd | OptimizerKind::Sgdm => Vec::new(),
        OptimizerKind::Adam | OptimizerKind::Adamw | OptimizerKind::Rmsprop => raw.clone(),
        OptimizerKind::Adan => match (&slot.prev_grad, adan_k) {
            (Some(prev), k) if k > 0 => {
                let c2 = 1.0 - cfg.beta2;
                raw.iter()
                    .zip(prev.data())
                    .map(|(&g, &p)| g + c2 * (g - p))
                    .collect()
            }
            _ => raw.clone(),
        },
    };
    probe.record(&MomentInputs {
        step,
        param,
        kind: cfg.kind,
        regularized: apply,
        raw,
        first: &first,
        second: &second,
    });
}

/// Baseline transforms followed by AGR for a single tensor, in the same
/// order [`Optimizer::step`] uses (clip, centralize, AGR). Weight decay is
/// not part of this pipeline.
pub fn transform_gradient(
    g: &DenseTensor,
    config: &OptimizerConfig,
    role: ParamRole,
    epoch: u64,
) -> DenseTensor {
    let mut out = g.clone();
    let buf = out.data_mut();
    if let Some(clip) = config.clip_norm {
        let scale = clip_scale(crate::tensor::l2_norm(buf), clip);
        if scale < 1.0 {
            buf.iter_mut().for_each(|x| *x *= scale);
        }
    }
    if config.centralize && role.is_weight() {
        centralize(buf);
    }
    if should_apply(role, &config.agr, epoch) {
        regularize_in_place(buf);
    }
    out
}
