//! Adaptive gradient regularization.
//!
//! For one layer's weight gradient `g`, each coordinate gets a coefficient
//! equal to its share of the layer's total L1 mass,
//!
//! ```text
//! alpha_i = |g_i| / sum_j |g_j|
//! psi(g)_i = g_i - alpha_i * g_i = (1 - alpha_i) * g_i
//! ```
//!
//! so large coordinates are shrunk more than small ones. The coefficients
//! are always computed over the whole flattened tensor (a conv kernel of
//! shape `[c_in, c_out, k, k]` is one group), never per row or channel.
//!
//! An all-zero gradient has no well-defined share; it maps to `alpha = 0`
//! and `psi` is the identity there.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{l1_norm, DenseTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgrError {
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

/// Shrink factor `1 - |g| / l1_total` for one coordinate. `l1_total` must
/// be positive. Shared by [`regularize`] and the fused optimizer kernels.
#[inline(always)]
pub fn keep_factor(g: f64, l1_total: f64) -> f64 {
    1.0 - g.abs() / l1_total
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgrCoefficients {
    alpha: DenseTensor,
    l1_total: f64,
}

impl AgrCoefficients {
    pub fn alpha(&self) -> &DenseTensor {
        &self.alpha
    }

    pub fn l1_total(&self) -> f64 {
        self.l1_total
    }

    /// True when the source gradient was identically zero.
    pub fn is_degenerate(&self) -> bool {
        self.l1_total == 0.0
    }
}

pub fn compute_coefficients(g: &DenseTensor) -> AgrCoefficients {
    let l1_total = l1_norm(g.data());
    let mut alpha = g.clone();
    if l1_total == 0.0 {
        alpha.data_mut().fill(0.0);
    } else {
        for a in alpha.data_mut() {
            *a = a.abs() / l1_total;
        }
    }
    AgrCoefficients { alpha, l1_total }
}

/// Applies the AGR operator and returns a new tensor.
pub fn regularize(g: &DenseTensor) -> DenseTensor {
    let mut out = g.clone();
    regularize_in_place(out.data_mut());
    out
}

/// In-place form of [`regularize`] over a flat buffer. Returns the L1 total
/// the coefficients were normalized by.
pub fn regularize_in_place(g: &mut [f64]) -> f64 {
    let l1_total = l1_norm(g);
    if l1_total > 0.0 {
        for x in g.iter_mut() {
            *x *= keep_factor(*x, l1_total);
        }
    }
    l1_total
}

/// Per-coordinate step size `eta * (1 - alpha_i)` that plain SGD with AGR
/// effectively applies to the raw gradient.
pub fn effective_rate_view(eta: f64, coeffs: &AgrCoefficients) -> Result<DenseTensor, AgrError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(AgrError::InvalidRate(eta));
    }
    let mut rates = coeffs.alpha.clone();
    for r in rates.data_mut() {
        *r = eta * (1.0 - *r);
    }
    Ok(rates)
}

/// What a parameter tensor is, for deciding whether AGR touches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    DenseWeight,
    ConvKernel,
    Bias,
    NormParam,
}

impl ParamRole {
    pub fn is_weight(self) -> bool {
        matches!(self, ParamRole::DenseWeight | ParamRole::ConvKernel)
    }
}

/// When AGR is active: an on/off switch, an optional epoch cutoff (active
/// while `epoch < until_epoch`), and the parameter roles it applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgrSchedule {
    pub enabled: bool,
    #[serde(default)]
    pub until_epoch: Option<u64>,
    #[serde(default = "default_roles")]
    pub eligible_roles: BTreeSet<ParamRole>,
}

fn default_roles() -> BTreeSet<ParamRole> {
    [ParamRole::DenseWeight, ParamRole::ConvKernel]
        .into_iter()
        .collect()
}

impl Default for AgrSchedule {
    fn default() -> Self {
        Self::off()
    }
}

impl AgrSchedule {
    pub fn off() -> Self {
        Self {
            enabled: false,
            until_epoch: None,
            eligible_roles: default_roles(),
        }
    }

    pub fn on() -> Self {
        Self {
            enabled: true,
            ..Self::off()
        }
    }

    pub fn until(mut self, epoch: u64) -> Self {
        self.until_epoch = Some(epoch);
        self
    }

    pub fn with_roles(mut self, roles: impl IntoIterator<Item = ParamRole>) -> Self {
        self.eligible_roles = roles.into_iter().collect();
        self
    }
}

pub fn should_apply(role: ParamRole, schedule: &AgrSchedule, epoch: u64) -> bool {
    schedule.enabled
        && schedule.eligible_roles.contains(&role)
        && schedule.until_epoch.is_none_or(|cut| epoch < cut)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> DenseTensor {
        DenseTensor::vector(v).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let c = compute_coefficients(&t(&[1.0, -1.0]));
        assert_eq!(c.alpha().data(), &[0.5, 0.5]);
        assert_eq!(c.l1_total(), 2.0);

        let c = compute_coefficients(&t(&[3.0, 1.0]));
        assert_eq!(c.alpha().data(), &[0.75, 0.25]);
        assert_eq!(c.l1_total(), 4.0);

        let c = compute_coefficients(&t(&[0.0, 0.0]));
        assert_eq!(c.alpha().data(), &[0.0, 0.0]);
        assert!(c.is_degenerate());
    }

    #[test]
    fn regularize_examples() {
        assert_eq!(regularize(&t(&[3.0, 1.0])).data(), &[0.75, 0.75]);
        assert_eq!(regularize(&t(&[1.0, -1.0])).data(), &[0.5, -0.5]);
        assert_eq!(regularize(&t(&[-2.5])).data(), &[0.0]);
        assert_eq!(regularize(&t(&[0.0, 0.0])).data(), &[0.0, 0.0]);
    }

    #[test]
    fn conv_kernel_is_one_group() {
        let g = DenseTensor::full(&[2, 3, 2, 2], 1.0).unwrap();
        let c = compute_coefficients(&g);
        let n = g.len() as f64;
        assert!(c.alpha().data().iter().all(|&a| a == 1.0 / n));
        assert_eq!(regularize(&g).shape(), g.shape());
    }

    #[test]
    fn effective_rates() {
        let c = compute_coefficients(&t(&[3.0, 1.0]));
        let r = effective_rate_view(0.1, &c).unwrap();
        assert!((r.data()[0] - 0.025).abs() < 1e-15);
        assert!((r.data()[1] - 0.075).abs() < 1e-15);

        let c = compute_coefficients(&t(&[0.0, 0.0]));
        assert_eq!(effective_rate_view(1.0, &c).unwrap().data(), &[1.0, 1.0]);

        let c = compute_coefficients(&t(&[2.0, -2.0]));
        assert_eq!(effective_rate_view(0.1, &c).unwrap().data(), &[0.05, 0.05]);

        assert_eq!(effective_rate_view(0.0, &c), Err(AgrError::InvalidRate(0.0)));
        assert!(effective_rate_view(-1.0, &c).is_err());
    }

    #[test]
    fn gating() {
        assert!(!should_apply(ParamRole::Bias, &AgrSchedule::on(), 0));
        assert!(!should_apply(ParamRole::NormParam, &AgrSchedule::on(), 0));
        assert!(!should_apply(ParamRole::DenseWeight, &AgrSchedule::off(), 0));
        let cut = AgrSchedule::on().until(250);
        assert!(should_apply(ParamRole::DenseWeight, &cut, 249));
        assert!(!should_apply(ParamRole::DenseWeight, &cut, 250));
        assert!(!should_apply(ParamRole::DenseWeight, &cut, 260));
        assert!(should_apply(ParamRole::ConvKernel, &AgrSchedule::on(), 1_000_000));
        let with_bias = AgrSchedule::on().with_roles([ParamRole::Bias]);
        assert!(should_apply(ParamRole::Bias, &with_bias, 3));
        assert!(!should_apply(ParamRole::DenseWeight, &with_bias, 3));
    }

    #[test]
    fn schedule_roundtrips_through_json() {
        let s = AgrSchedule::on().until(12);
        let json = serde_json::to_string(&s).unwrap();
        let back: AgrSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let minimal: AgrSchedule = serde_json::from_str(r#"{"enabled":true}"#).unwrap();
        assert_eq!(minimal, AgrSchedule::on());
    }

    fn gradient() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e3f64..1e3, 1..128)
    }

    proptest! {
        #[test]
        fn contraction_and_sign(values in gradient()) {
            let g = t(&values);
            let p = regularize(&g);
            prop_assert!(p.l2() <= g.l2());
            for (&gi, &pi) in g.data().iter().zip(p.data()) {
                prop_assert!(pi.abs() <= gi.abs());
                prop_assert!(pi == 0.0 || pi.signum() == gi.signum());
            }
        }

        #[test]
        fn coefficients_on_simplex(values in gradient()) {
            let c = compute_coefficients(&t(&values));
            prop_assert!(c.l1_total() >= 0.0);
            prop_assert!(c.alpha().data().iter().all(|&a| (0.0..=1.0).contains(&a)));
            if !c.is_degenerate() {
                prop_assert!((c.alpha().sum() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn scale_equivariance(values in gradient(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            let g = t(&values);
            let lhs = regularize(&g.scale(c));
            let rhs = regularize(&g).scale(c);
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn larger_magnitude_larger_coefficient(values in gradient()) {
            let g = t(&values);
            let c = compute_coefficients(&g);
            let a = c.alpha().data();
            for i in 0..g.len() {
                for j in 0..g.len() {
                    if g.data()[i].abs() > g.data()[j].abs() {
                        prop_assert!(a[i] >= a[j]);
                        if g.data()[i].abs() > g.data()[j].abs() * (1.0 + 1e-9) + 1e-300 {
                            prop_assert!(a[i] > a[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn sgd_view_matches_operator(values in gradient(), eta in 1e-4f64..1.0) {
            let g = t(&values);
            let c = compute_coefficients(&g);
            let rates = effective_rate_view(eta, &c).unwrap();
            let via_rates = rates.mul(&g).unwrap();
            let via_psi = regularize(&g).scale(eta);
            for (a, b) in via_rates.data().iter().zip(via_psi.data()) {
                prop_assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()) * 4.0);
            }
        }
    }
}
