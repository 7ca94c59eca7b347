//! Randomized and finite-difference checks of AGR's analytical properties.
//!
//! Each check draws its inputs from a per-trial ChaCha stream derived from
//! `(seed, check, trial)`, so results do not depend on execution order.
//! A check records how many trials ran, how many violated the bound, and
//! the worst signed margin (bound minus observed value; negative means a
//! violation). Entries flagged `informational` are reported but do not
//! decide whether the suite passes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agr::{compute_coefficients, effective_rate_view, regularize, AgrSchedule, ParamRole};
use crate::linalg::spectral_norm;
use crate::nn::{
    mse, objective_eval, softmax_cross_entropy, Activation, MlpModel, NnError, Objective, Quadratic,
};
use crate::optim::{OptimError, Optimizer, OptimizerConfig, OptimizerKind, ParamRef, RecordingProbe};
use crate::tensor::{derive_seed, rand_fill_with, seeded_rng, DenseTensor, Distribution, TensorError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid trial config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

/// Check names, also used as tolerance keys.
pub mod names {
    pub const NORM_CONTRACTION: &str = "norm_contraction";
    pub const NORM_CONTRACTION_ELEMENTWISE: &str = "norm_contraction_elementwise";
    pub const COEFFICIENT_SIMPLEX: &str = "coefficient_simplex";
    pub const JACOBIAN_SPECTRAL: &str = "jacobian_spectral_bound";
    pub const JACOBIAN_DIAGONAL: &str = "jacobian_diagonal_factor";
    pub const JACOBIAN_SPECTRAL_DIAGONAL_FAMILY: &str = "jacobian_spectral_bound_diagonal_family";
    pub const JACOBIAN_NONCONVEX: &str = "jacobian_spectral_bound_rosenbrock";
    pub const LR_SGD: &str = "lr_equivalence_sgd";
    pub const LR_MOMENTUM: &str = "lr_equivalence_momentum";
    pub const PLACEMENT_ADAMW: &str = "placement_adamw";
    pub const PLACEMENT_ADAN: &str = "placement_adan";
    pub const GRADCHECK_MLP: &str = "gradcheck_mlp";
    pub const GRADCHECK_OBJECTIVES: &str = "gradcheck_objectives";
    pub const GRADCHECK_ABS: &str = "gradcheck_abs_floor";
    pub const FD_STEP: &str = "fd_step";
}

/// Which group of checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    /// Contraction, coefficient simplex and Jacobian bound.
    Theorem41,
    /// Per-coordinate learning-rate equivalence for SGD and SGDM.
    Theorem42,
    /// Which gradient reaches each moment in AdamW and Adan.
    Placement,
    /// Analytic gradients against central differences.
    Gradcheck,
}

impl FromStr for Suite {
    type Err = VerifyError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "theorem41" => Ok(Suite::Theorem41),
            "theorem42" => Ok(Suite::Theorem42),
            "placement" => Ok(Suite::Placement),
            "gradcheck" => Ok(Suite::Gradcheck),
            other => Err(VerifyError::InvalidConfig(format!("unknown suite `{other}`"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::All => "all",
            Suite::Theorem41 => "theorem41",
            Suite::Theorem42 => "theorem42",
            Suite::Placement => "placement",
            Suite::Gradcheck => "gradcheck",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    /// Random gradient tensors for the contraction, simplex and SGD checks.
    pub trials: usize,
    pub shapes: Vec<Vec<usize>>,
    pub distributions: Vec<Distribution>,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    /// Quadratics sampled per Jacobian family.
    pub jacobian_trials: usize,
    /// Independent gradient sequences for the momentum expansion check.
    pub momentum_trials: usize,
    pub momentum_steps: usize,
    pub placement_steps: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            shapes: vec![
                vec![1, 1],
                vec![2, 2],
                vec![4, 16],
                vec![8, 8],
                vec![16, 16],
                vec![32, 8],
                vec![32, 32],
                vec![64, 64],
                vec![8, 8, 3, 3],
            ],
            distributions: vec![
                Distribution::Normal { mean: 0.0, std: 1.0 },
                Distribution::LogNormal { mu: 0.0, sigma: 2.0 },
            ],
            seed: 42,
            tolerances: default_tolerances(),
            jacobian_trials: 100,
            momentum_trials: 100,
            momentum_steps: 10,
            placement_steps: 100,
        }
    }
}

pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        (names::NORM_CONTRACTION, 1e-12),
        (names::NORM_CONTRACTION_ELEMENTWISE, 1e-15),
        (names::COEFFICIENT_SIMPLEX, 1e-9),
        (names::JACOBIAN_SPECTRAL, 1e-3),
        (names::JACOBIAN_DIAGONAL, 1e-6),
        (names::LR_MOMENTUM, 1e-10),
        (names::GRADCHECK_MLP, 1e-4),
        (names::GRADCHECK_OBJECTIVES, 1e-4),
        (names::GRADCHECK_ABS, 1e-8),
        (names::FD_STEP, 1e-5),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl TrialConfig {
    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Smallest configuration that still runs every check once.
    pub fn minimal(seed: u64) -> Self {
        Self {
            trials: 1,
            jacobian_trials: 1,
            momentum_trials: 1,
            placement_steps: 2,
            seed,
            ..Self::default()
        }
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .copied()
            .or_else(|| default_tolerances().get(name).copied())
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VerifyError::InvalidConfig(m));
        if self.trials == 0 || self.jacobian_trials == 0 || self.momentum_trials == 0 {
            return bad("trial counts must be at least 1".into());
        }
        if self.momentum_steps == 0 || self.placement_steps == 0 {
            return bad("step counts must be at least 1".into());
        }
        if self.shapes.is_empty() || self.distributions.is_empty() {
            return bad("need at least one shape and one distribution".into());
        }
        for s in &self.shapes {
            if s.is_empty() || s.contains(&0) {
                return bad(format!("invalid shape {s:?}"));
            }
        }
        for (k, &v) in &self.tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance `{k}` must be positive, got {v}"));
            }
        }
        Ok(())
    }

    fn rng(&self, check: &str, trial: usize) -> ChaCha8Rng {
        let salt = check
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        seeded_rng(derive_seed(derive_seed(self.seed, salt), trial as u64))
    }

    fn sample_gradient(&self, check: &str, trial: usize) -> Result<(DenseTensor, ChaCha8Rng)> {
        let shape = &self.shapes[trial % self.shapes.len()];
        let dist = self.distributions[(trial / self.shapes.len()) % self.distributions.len()];
        let mut rng = self.rng(check, trial);
        let g = rand_fill_with(shape, dist, &mut rng)?;
        Ok((g, rng))
    }
}

/// The operator under test. [`Agr`] is the real one; tests substitute
/// broken variants to make sure the checks can fail.
pub trait GradientOperator: Sync {
    fn alpha(&self, g: &DenseTensor) -> DenseTensor;
    fn apply(&self, g: &DenseTensor) -> DenseTensor;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Agr;

impl GradientOperator for Agr {
    fn alpha(&self, g: &DenseTensor) -> DenseTensor {
        compute_coefficients(g).alpha().clone()
    }

    fn apply(&self, g: &DenseTensor) -> DenseTensor {
        regularize(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    #[serde(skip)]
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Smallest observed `bound - value`; `null` in JSON when no trial
    /// produced a finite margin.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub informational: bool,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            trials: 0,
            failures: 0,
            worst_margin: f64::INFINITY,
            example: None,
            informational: false,
        }
    }

    fn informational(mut self) -> Self {
        self.informational = true;
        self
    }

    /// Records one trial: `margin` is the signed slack, `ok` whether the
    /// trial passed at the check's tolerance.
    fn observe(&mut self, margin: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.trials += 1;
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
        if !ok {
            self.failures += 1;
            if self.example.is_none() {
                self.example = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    /// True when every non-informational check has zero failures.
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| !c.informational)
            .all(CheckResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `{check name: {trials, failures, worst_margin, ...}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, &CheckResult> =
            self.checks.iter().map(|c| (c.name.as_str(), c)).collect();
        serde_json::to_value(map).expect("report is always serializable")
    }
}

fn preview(values: &[f64]) -> String {
    const MAX: usize = 8;
    let head: Vec<String> = values.iter().take(MAX).map(|v| format!("{v:.6e}")).collect();
    if values.len() > MAX {
        format!("[{}, ... ({} total)]", head.join(", "), values.len())
    } else {
        format!("[{}]", head.join(", "))
    }
}

/// `||psi(g)||_2 <= ||g||_2` and `|psi(g)_i| <= |g_i|` over random draws.
/// Returns the L2 entry and the elementwise entry.
pub fn check_norm_contraction(
    cfg: &TrialConfig,
    op: &dyn GradientOperator,
) -> Result<Vec<CheckResult>> {
    let tol_l2 = cfg.tol(names::NORM_CONTRACTION);
    let tol_el = cfg.tol(names::NORM_CONTRACTION_ELEMENTWISE);
    let mut l2 = CheckResult::new(names::NORM_CONTRACTION);
    let mut el = CheckResult::new(names::NORM_CONTRACTION_ELEMENTWISE);
    for trial in 0..cfg.trials {
        let (g, _) = cfg.sample_gradient(names::NORM_CONTRACTION, trial)?;
        let p = op.apply(&g);
        let (gn, pn) = (g.l2(), p.l2());
        l2.observe(gn - pn, pn <= gn + tol_l2, || {
            format!("trial {trial}: ||psi(g)||={pn:e} > ||g||={gn:e}, g={}", preview(g.data()))
        });
        let (worst_i, margin) = g
            .data()
            .iter()
            .zip(p.data())
            .map(|(a, b)| a.abs() - b.abs())
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
        el.observe(margin, margin >= -tol_el, || {
            format!(
                "trial {trial}: |psi(g)_{worst_i}|={:e} > |g_{worst_i}|={:e}",
                p.data()[worst_i].abs(),
                g.data()[worst_i].abs()
            )
        });
    }
    Ok(vec![l2, el])
}

/// Coefficients lie in `[0, 1]` and sum to one for non-zero gradients.
pub fn check_coefficient_simplex(cfg: &TrialConfig, op: &dyn GradientOperator) -> Result<CheckResult> {
    let tol = cfg.tol(names::COEFFICIENT_SIMPLEX);
    let mut out = CheckResult::new(names::COEFFICIENT_SIMPLEX);
    for trial in 0..cfg.trials {
        let (g, _) = cfg.sample_gradient(names::COEFFICIENT_SIMPLEX, trial)?;
        if g.l1() == 0.0 {
            continue;
        }
        let alpha = op.alpha(&g);
        let sum = alpha.sum();
        let lo = alpha.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = alpha.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = (tol - (sum - 1.0).abs()).min(lo).min(1.0 - hi);
        let ok = (sum - 1.0).abs() <= tol && lo >= 0.0 && hi <= 1.0;
        out.observe(margin, ok, || {
            format!("trial {trial}: sum(alpha)={sum}, min={lo}, max={hi}")
        });
    }
    Ok(out)
}

/// Central-difference Jacobian of `w -> psi(A w)` for a quadratic `A`.
pub fn regularized_gradient_jacobian(
    q: &Quadratic,
    w: &[f64],
    h: f64,
    op: &dyn GradientOperator,
) -> Result<DenseTensor> {
    if h.is_nan() || h <= 0.0 {
        return Err(VerifyError::InvalidStep(h));
    }
    let n = q.dim();
    let eval = |x: &[f64]| -> Result<DenseTensor> {
        Ok(op.apply(&DenseTensor::vector(&q.gradient(x))?))
    };
    let mut jac = vec![0.0; n * n];
    let mut x = w.to_vec();
    for j in 0..n {
        x[j] = w[j] + h;
        let plus = eval(&x)?;
        x[j] = w[j] - h;
        let minus = eval(&x)?;
        x[j] = w[j];
        for i in 0..n {
            jac[i * n + j] = (plus.data()[i] - minus.data()[i]) / (2.0 * h);
        }
    }
    Ok(DenseTensor::from_vec(&[n, n], jac)?)
}

/// Result of evaluating the Hessian-bound at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSample {
    pub jacobian_norm: f64,
    pub hessian_norm: f64,
    /// `J_ii / A_ii` and the predicted `(1 - alpha_i)^2`, for `A_ii > 0`.
    pub diagonal: Vec<(f64, f64)>,
}

impl JacobianSample {
    /// `(||A|| - ||J||) / ||A||`, or `-||J||` for a zero `A`.
    pub fn relative_margin(&self) -> f64 {
        if self.hessian_norm == 0.0 {
            -self.jacobian_norm
        } else {
            (self.hessian_norm - self.jacobian_norm) / self.hessian_norm
        }
    }
}

/// Evaluates the regularized-gradient Jacobian against the Hessian `A` at
/// `w`. Fails if `A` is not symmetric PSD.
pub fn jacobian_sample(
    a: &DenseTensor,
    w: &[f64],
    h: f64,
    op: &dyn GradientOperator,
) -> Result<JacobianSample> {
    let q = Quadratic::new(a.clone())?;
    let jac = regularized_gradient_jacobian(&q, w, h, op)?;
    let g = DenseTensor::vector(&q.gradient(w))?;
    let alpha = compute_coefficients(&g);
    let n = q.dim();
    let diagonal = (0..n)
        .filter(|&i| a.at2(i, i) > 0.0)
        .map(|i| {
            let keep = 1.0 - alpha.alpha().data()[i];
            (jac.at2(i, i) / a.at2(i, i), keep * keep)
        })
        .collect();
    Ok(JacobianSample {
        jacobian_norm: spectral_norm(&jac)?,
        hessian_norm: spectral_norm(a)?,
        diagonal,
    })
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> Result<DenseTensor> {
    let b = rand_fill_with(&[dim, dim], Distribution::standard_normal(), rng)?;
    let mut a = b.transpose()?.matmul(&b)?.scale(1.0 / dim as f64);
    // Exact symmetry for the PSD constructor.
    for i in 0..dim {
        for j in 0..i {
            let v = a.at2(i, j);
            a.data_mut()[j * dim + i] = v;
        }
    }
    Ok(a)
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Result<Vec<f64>> {
    Ok(Distribution::standard_normal().sample_n(rng, dim)?)
}

/// Hessian bound on convex quadratics.
///
/// * dense family: `A = B^T B / d` with Gaussian `B`, `d` cycling through
///   2..=20; asserts `||J||_2 <= ||A||_2 (1 + tol)`.
/// * diagonal family: `A = diag(U(0.1, 5))`; asserts the per-coordinate
///   factor `J_ii / A_ii = (1 - alpha_i)^2` and `J_ii / A_ii <= 1`.
///
/// Two informational entries report the spectral margin on the diagonal
/// family and on the (nonconvex) Rosenbrock function.
pub fn check_jacobian_bound(cfg: &TrialConfig, op: &dyn GradientOperator) -> Result<Vec<CheckResult>> {
    let h = cfg.tol(names::FD_STEP);
    let tol_spec = cfg.tol(names::JACOBIAN_SPECTRAL);
    let tol_diag = cfg.tol(names::JACOBIAN_DIAGONAL);

    let mut spectral = CheckResult::new(names::JACOBIAN_SPECTRAL);
    for trial in 0..cfg.jacobian_trials {
        let mut rng = cfg.rng(names::JACOBIAN_SPECTRAL, trial);
        let dim = 2 + trial % 19;
        let a = random_psd(&mut rng, dim)?;
        let w = random_point(&mut rng, dim)?;
        let s = jacobian_sample(&a, &w, h, op)?;
        let margin = s.relative_margin();
        spectral.observe(margin, margin >= -tol_spec, || {
            format!(
                "trial {trial} (dim {dim}): ||J||={:.6} > ||A||={:.6}, w={}",
                s.jacobian_norm,
                s.hessian_norm,
                preview(&w)
            )
        });
    }

    let mut diagonal = CheckResult::new(names::JACOBIAN_DIAGONAL);
    let mut spectral_diag =
        CheckResult::new(names::JACOBIAN_SPECTRAL_DIAGONAL_FAMILY).informational();
    for trial in 0..cfg.jacobian_trials {
        let mut rng = cfg.rng(names::JACOBIAN_DIAGONAL, trial);
        let dim = 2 + trial % 19;
        let entries = Distribution::Uniform { lo: 0.1, hi: 5.0 }.sample_n(&mut rng, dim)?;
        let a = DenseTensor::diag(&entries)?;
        let w = random_point(&mut rng, dim)?;
        let s = jacobian_sample(&a, &w, h, op)?;
        let mut margin = f64::INFINITY;
        let mut ok = true;
        for &(factor, predicted) in &s.diagonal {
            let diff = (factor - predicted).abs();
            margin = margin.min(tol_diag - diff).min(1.0 - factor);
            ok &= diff <= tol_diag && factor >= -tol_diag && factor <= 1.0 + tol_diag;
        }
        diagonal.observe(margin, ok, || {
            format!("trial {trial} (dim {dim}): factors {:?}", s.diagonal)
        });
        let m = s.relative_margin();
        spectral_diag.observe(m, m >= -tol_spec, || {
            format!(
                "trial {trial} (dim {dim}): ||J||={:.6} > ||A||={:.6}, w={}",
                s.jacobian_norm,
                s.hessian_norm,
                preview(&w)
            )
        });
    }

    let mut nonconvex = CheckResult::new(names::JACOBIAN_NONCONVEX).informational();
    let rosen = Objective::Rosenbrock { a: 1.0, b: 100.0 };
    for trial in 0..cfg.jacobian_trials {
        let mut rng = cfg.rng(names::JACOBIAN_NONCONVEX, trial);
        let w = Distribution::Uniform { lo: -2.0, hi: 2.0 }.sample_n(&mut rng, 2)?;
        let psi_grad = |x: &[f64]| -> Result<DenseTensor> {
            let e = objective_eval(&rosen, &DenseTensor::vector(x)?)?;
            Ok(op.apply(&e.gradient))
        };
        let mut jac = vec![0.0; 4];
        let mut x = w.clone();
        for j in 0..2 {
            x[j] = w[j] + h;
            let plus = psi_grad(&x)?;
            x[j] = w[j] - h;
            let minus = psi_grad(&x)?;
            x[j] = w[j];
            for i in 0..2 {
                jac[i * 2 + j] = (plus.data()[i] - minus.data()[i]) / (2.0 * h);
            }
        }
        let hess = objective_eval(&rosen, &DenseTensor::vector(&w)?)?
            .hessian
            .expect("rosenbrock has a hessian");
        let (jn, hn) = (spectral_norm(&DenseTensor::from_vec(&[2, 2], jac)?)?, spectral_norm(&hess)?);
        let margin = (hn - jn) / hn;
        nonconvex.observe(margin, margin >= -tol_spec, || {
            format!("trial {trial}: w={w:?}, ||J||={jn:.6}, ||H||={hn:.6}")
        });
    }

    Ok(vec![spectral, diagonal, spectral_diag, nonconvex])
}

/// AGR as a per-coordinate learning rate.
///
/// * SGD: one AGR step equals `w - eta (1 - alpha) * g` bit for bit.
/// * SGDM with dampening: after each of `momentum_steps` steps,
///   `w_{t+1} = w_t - eta * sum_i beta^i (1 - beta) (1 - alpha_{t-i}) g_{t-i}`
///   to within the momentum tolerance, with `alpha` recomputed here from
///   the recorded gradients.
pub fn check_lr_equivalence(cfg: &TrialConfig) -> Result<Vec<CheckResult>> {
    let mut sgd = CheckResult::new(names::LR_SGD);
    for trial in 0..cfg.trials {
        let (g, mut rng) = cfg.sample_gradient(names::LR_SGD, trial)?;
        let w0 = rand_fill_with(g.shape(), Distribution::standard_normal(), &mut rng)?;
        let eta: f64 = rng.random_range(1e-4..1.0);
        let config = OptimizerConfig::new(OptimizerKind::Sgd)
            .with_lr(eta)
            .with_agr(AgrSchedule::on());
        let mut opt = Optimizer::new(config)?;
        let mut w = w0.clone();
        opt.step_single(&mut w, &g, ParamRole::DenseWeight, 0)?;
        let rates = effective_rate_view(eta, &compute_coefficients(&g))
            .map_err(|e| VerifyError::InvalidConfig(e.to_string()))?;
        let expected = w0.sub(&rates.mul(&g)?)?;
        let max_diff = w
            .data()
            .iter()
            .zip(expected.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let identical = w.data().iter().zip(expected.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        let margin = if identical { 0.0 } else { -max_diff };
        sgd.observe(margin, identical, || {
            format!("trial {trial}: max |diff| = {max_diff:e}")
        });
    }

    let tol = cfg.tol(names::LR_MOMENTUM);
    let beta = 0.9;
    let mut momentum = CheckResult::new(names::LR_MOMENTUM);
    for trial in 0..cfg.momentum_trials {
        let mut rng = cfg.rng(names::LR_MOMENTUM, trial);
        let shape = cfg.shapes[trial % cfg.shapes.len()].clone();
        let dist = cfg.distributions[trial % cfg.distributions.len()];
        let eta: f64 = rng.random_range(1e-3..0.5);
        let config = OptimizerConfig::new(OptimizerKind::Sgdm)
            .with_lr(eta)
            .with_betas(beta, 0.0, 0.0)
            .with_dampening(true)
            .with_agr(AgrSchedule::on());
        let mut opt = Optimizer::new(config)?;
        let mut w = rand_fill_with(&shape, Distribution::standard_normal(), &mut rng)?;
        let mut history: Vec<Vec<f64>> = Vec::new();
        let mut worst = f64::INFINITY;
        for _ in 0..cfg.momentum_steps {
            let g = rand_fill_with(&shape, dist, &mut rng)?;
            history.push(g.data().to_vec());
            let before = w.clone();
            opt.step_single(&mut w, &g, ParamRole::DenseWeight, 0)?;
            let t = history.len() - 1;
            let mut update = vec![0.0; g.len()];
            for i in 0..=t {
                let past = &history[t - i];
                let total: f64 = past.iter().map(|x| x.abs()).sum();
                let weight = beta.powi(i as i32) * (1.0 - beta);
                for (u, &x) in update.iter_mut().zip(past) {
                    let alpha = if total > 0.0 { x.abs() / total } else { 0.0 };
                    *u += weight * (1.0 - alpha) * x;
                }
            }
            for ((&now, &prev), u) in w.data().iter().zip(before.data()).zip(&update) {
                worst = worst.min(tol - (now - (prev - eta * u)).abs());
            }
        }
        momentum.observe(worst, worst >= 0.0, || {
            format!("trial {trial}: expansion mismatch exceeds {tol:e} by {:e}", -worst)
        });
    }
    Ok(vec![sgd, momentum])
}

/// Instrumented AdamW and Adan runs: the second-moment input must be built
/// from the pre-AGR gradient while the first moment receives `psi(g)`.
pub fn check_placement(cfg: &TrialConfig) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    for (name, kind) in [
        (names::PLACEMENT_ADAMW, OptimizerKind::Adamw),
        (names::PLACEMENT_ADAN, OptimizerKind::Adan),
    ] {
        let mut out = CheckResult::new(name);
        let mut rng = cfg.rng(name, 0);
        let config = OptimizerConfig::new(kind)
            .with_weight_decay(0.01)
            .with_agr(AgrSchedule::on());
        let beta2 = config.beta2;
        let couples = kind != OptimizerKind::Adan;
        let mut opt = Optimizer::new(config)?;
        let probe = RecordingProbe::new();
        opt.set_probe(Box::new(probe.clone()));

        let dist = Distribution::standard_normal();
        let mut weight = rand_fill_with(&[8, 4], dist, &mut rng)?;
        let mut bias = rand_fill_with(&[8], dist, &mut rng)?;
        let mut prev_raw: Vec<Option<Vec<f64>>> = vec![None, None];
        for step in 0..cfg.placement_steps {
            let gw = rand_fill_with(&[8, 4], dist, &mut rng)?;
            let gb = rand_fill_with(&[8], dist, &mut rng)?;
            let expected_raw: Vec<Vec<f64>> = [(&gw, &weight), (&gb, &bias)]
                .iter()
                .map(|(g, w)| {
                    if couples {
                        g.data().iter().zip(w.data()).map(|(&g, &w)| g + 0.01 * w).collect()
                    } else {
                        g.data().to_vec()
                    }
                })
                .collect();
            let seen = probe.len();
            opt.step(
                &mut [
                    ParamRef::new(&mut weight, &gw, ParamRole::DenseWeight),
                    ParamRef::new(&mut bias, &gb, ParamRole::Bias),
                ],
                0,
            )?;
            for rec in &probe.records()[seen..] {
                let raw = &expected_raw[rec.param];
                let first_expected = if rec.regularized {
                    regularize(&DenseTensor::vector(raw)?).into_data()
                } else {
                    raw.clone()
                };
                let second_expected: Vec<f64> = match (&prev_raw[rec.param], kind) {
                    (Some(prev), OptimizerKind::Adan) => raw
                        .iter()
                        .zip(prev)
                        .map(|(&g, &p)| g + (1.0 - beta2) * (g - p))
                        .collect(),
                    _ => raw.clone(),
                };
                let raw_ok = &rec.raw == raw;
                let first_ok = rec.first == first_expected;
                let second_ok = rec.second == second_expected;
                let ok = raw_ok && first_ok && second_ok;
                let margin = if ok { 0.0 } else { -1.0 };
                out.observe(margin, ok, || {
                    format!(
                        "step {step}, param {}: raw ok={raw_ok}, first ok={first_ok}, second ok={second_ok}",
                        rec.param
                    )
                });
            }
            for (slot, raw) in prev_raw.iter_mut().zip(expected_raw) {
                *slot = Some(raw);
            }
        }
        results.push(out);
    }
    Ok(results)
}

/// Central differences `(f(w + h e_i) - f(w - h e_i)) / 2h`.
pub fn finite_difference_gradient(
    f: impl Fn(&DenseTensor) -> f64,
    w: &DenseTensor,
    h: f64,
) -> Result<DenseTensor> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(VerifyError::InvalidStep(h));
    }
    let mut x = w.clone();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w.data()[i];
        x.data_mut()[i] = orig + h;
        let plus = f(&x);
        x.data_mut()[i] = orig - h;
        let minus = f(&x);
        x.data_mut()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(DenseTensor::from_vec(w.shape(), grad)?)
}

/// Which loss a gradient check differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Largest elementwise relative error between the MLP's analytic gradient
/// and central differences, plus the number of compared entries. Entries
/// where both values are below `abs_floor` count as zero error.
pub fn mlp_gradient_error(
    widths: &[usize],
    activation: Activation,
    loss: LossKind,
    batch: usize,
    h: f64,
    abs_floor: f64,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut rng = seeded_rng(seed);
    let mut model = MlpModel::init(widths, activation, rng.random())?;
    // Non-zero biases so every path is exercised.
    let mut flat = model.flat_params();
    for v in flat.iter_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    model.set_flat_params(&flat)?;
    let in_dim = widths[0];
    let out_dim = widths[widths.len() - 1];
    let x = rand_fill_with(&[batch, in_dim], Distribution::standard_normal(), &mut rng)?;
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..out_dim)).collect();
    let target = rand_fill_with(&[batch, out_dim], Distribution::standard_normal(), &mut rng)?;

    let eval = |m: &MlpModel| -> Result<(f64, DenseTensor)> {
        let y = m.predict(&x)?;
        Ok(match loss {
            LossKind::CrossEntropy => softmax_cross_entropy(&y, &labels)?,
            LossKind::Mse => mse(&y, &target)?,
        })
    };

    let logits = model.forward(&x)?;
    let (_, dlogits) = match loss {
        LossKind::CrossEntropy => softmax_cross_entropy(&logits, &labels)?,
        LossKind::Mse => mse(&logits, &target)?,
    };
    let grads = model.backward(&dlogits)?;
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.weight.data().iter().chain(g.bias.data()).copied())
        .collect();

    let base = DenseTensor::vector(&model.flat_params())?;
    let probe_model = std::cell::RefCell::new(model.clone());
    let numeric = finite_difference_gradient(
        |p| {
            let mut m = probe_model.borrow_mut();
            m.set_flat_params(p.data()).expect("same parameter count");
            eval(&m).map(|(l, _)| l).unwrap_or(f64::NAN)
        },
        &base,
        h,
    )?;
    let worst = analytic
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n, abs_floor))
        .fold(0.0, f64::max);
    Ok((worst, analytic.len()))
}

pub fn relative_error(a: f64, b: f64, abs_floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < abs_floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Analytic gradients of the MLP (hidden widths {2, 8, 32}, every
/// activation, both losses) and of the closed-form objectives against
/// central differences.
pub fn check_gradients(cfg: &TrialConfig) -> Result<Vec<CheckResult>> {
    let h = cfg.tol(names::FD_STEP);
    let abs_floor = cfg.tol(names::GRADCHECK_ABS);
    let tol = cfg.tol(names::GRADCHECK_MLP);
    let mut mlp = CheckResult::new(names::GRADCHECK_MLP);
    let mut case = 0u64;
    for width in [2usize, 8, 32] {
        for activation in Activation::ALL {
            for loss in [LossKind::CrossEntropy, LossKind::Mse] {
                let seed = derive_seed(cfg.seed, 1000 + case);
                case += 1;
                let (err, _) = mlp_gradient_error(&[3, width, width, 3], activation, loss, 4, h, abs_floor, seed)?;
                mlp.observe(tol - err, err < tol, || {
                    format!("width {width}, {activation}, {loss:?}: max relative error {err:e}")
                });
            }
        }
    }

    let tol = cfg.tol(names::GRADCHECK_OBJECTIVES);
    let mut objectives = CheckResult::new(names::GRADCHECK_OBJECTIVES);
    for trial in 0..cfg.jacobian_trials {
        let mut rng = cfg.rng(names::GRADCHECK_OBJECTIVES, trial);
        let obj = if trial % 2 == 0 {
            let dim = 2 + trial % 19;
            Objective::Quadratic(Quadratic::new(random_psd(&mut rng, dim)?)?)
        } else {
            Objective::Rosenbrock { a: 1.0, b: 100.0 }
        };
        let w = DenseTensor::vector(&Distribution::Uniform { lo: -2.0, hi: 2.0 }.sample_n(&mut rng, obj.dim())?)?;
        let analytic = objective_eval(&obj, &w)?.gradient;
        let numeric = finite_difference_gradient(|p| obj.loss(p).unwrap_or(f64::NAN), &w, h)?;
        let err = analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(&a, &n)| relative_error(a, n, abs_floor))
            .fold(0.0, f64::max);
        objectives.observe(tol - err, err < tol, || {
            format!("trial {trial}: {obj:?} at {:?}: relative error {err:e}", w.data())
        });
    }
    Ok(vec![mlp, objectives])
}

pub fn run_suite(cfg: &TrialConfig) -> Result<VerifyReport> {
    run_suite_with(cfg, Suite::All, &Agr)
}

pub fn run_suite_with(cfg: &TrialConfig, suite: Suite, op: &dyn GradientOperator) -> Result<VerifyReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Theorem41) {
        checks.extend(check_norm_contraction(cfg, op)?);
        checks.push(check_coefficient_simplex(cfg, op)?);
        checks.extend(check_jacobian_bound(cfg, op)?);
    }
    if wants(Suite::Theorem42) {
        checks.extend(check_lr_equivalence(cfg)?);
    }
    if wants(Suite::Placement) {
        checks.extend(check_placement(cfg)?);
    }
    if wants(Suite::Gradcheck) {
        checks.extend(check_gradients(cfg)?);
    }
    Ok(VerifyReport { checks })
}
