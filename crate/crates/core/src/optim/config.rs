use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::OptimError;
use crate::agr::AgrSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Sgdm,
    Adam,
    Adamw,
    Adan,
    Rmsprop,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Sgd,
        OptimizerKind::Sgdm,
        OptimizerKind::Adam,
        OptimizerKind::Adamw,
        OptimizerKind::Adan,
        OptimizerKind::Rmsprop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sgdm => "sgdm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamw => "adamw",
            OptimizerKind::Adan => "adan",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }

    /// Whether `weight_decay * theta` is added to the incoming gradient.
    /// Adan decays through its `(1 + lambda * eta)^-1` factor instead.
    pub(crate) fn couples_decay_into_gradient(self) -> bool {
        !matches!(self, OptimizerKind::Adan)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| OptimError::InvalidConfig(format!("unknown optimizer kind `{s}`")))
    }
}

/// Hyperparameters for one optimizer instance.
///
/// Conventions worth knowing:
///
/// * `beta1/beta2/beta3` follow each algorithm's own convention. AdamW,
///   Adam and SGDM use `m = beta1 * m + ...`; Adan uses
///   `m = (1 - beta1) * m + beta1 * g`, so its defaults are small
///   (0.02, 0.08, 0.01).
/// * SGDM is heavy-ball without dampening (`m = beta1 * m + g`) unless
///   `dampening` is set, in which case the new gradient enters with weight
///   `1 - beta1`.
/// * AdamW adds `weight_decay * theta` to the gradient *and* subtracts it
///   again in the update, exactly as the AGR-augmented algorithm lists it.
/// * `clip_norm` and `centralize` run before AGR, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OptimizerConfigFile")]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub agr: AgrSchedule,
    pub clip_norm: Option<f64>,
    pub centralize: bool,
    pub dampening: bool,
    pub adan_v_uses_regularized_prev: bool,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        let (lr, beta1, beta2, beta3) = match kind {
            OptimizerKind::Sgd => (0.01, 0.0, 0.0, 0.0),
            OptimizerKind::Sgdm => (0.01, 0.9, 0.0, 0.0),
            OptimizerKind::Adam | OptimizerKind::Adamw => (0.001, 0.9, 0.999, 0.0),
            OptimizerKind::Adan => (0.001, 0.02, 0.08, 0.01),
            OptimizerKind::Rmsprop => (0.01, 0.0, 0.99, 0.0),
        };
        Self {
            kind,
            lr,
            beta1,
            beta2,
            beta3,
            eps: 1e-8,
            weight_decay: 0.0,
            agr: AgrSchedule::off(),
            clip_norm: None,
            centralize: false,
            dampening: false,
            adan_v_uses_regularized_prev: false,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn with_agr(mut self, agr: AgrSchedule) -> Self {
        self.agr = agr;
        self
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, beta3: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.beta3 = beta3;
        self
    }

    pub fn with_clip_norm(mut self, clip_norm: f64) -> Self {
        self.clip_norm = Some(clip_norm);
        self
    }

    pub fn with_centralize(mut self, centralize: bool) -> Self {
        self.centralize = centralize;
        self
    }

    pub fn with_dampening(mut self, dampening: bool) -> Self {
        self.dampening = dampening;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |msg: String| Err(OptimError::InvalidConfig(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1], got {b}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// On-disk form: only `kind` is required, everything else falls back to
/// the per-kind defaults of [`OptimizerConfig::new`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerConfigFile {
    kind: OptimizerKind,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    beta3: Option<f64>,
    eps: Option<f64>,
    weight_decay: Option<f64>,
    agr: Option<AgrSchedule>,
    clip_norm: Option<f64>,
    centralize: Option<bool>,
    dampening: Option<bool>,
    adan_v_uses_regularized_prev: Option<bool>,
}

impl TryFrom<OptimizerConfigFile> for OptimizerConfig {
    type Error = OptimError;

    fn try_from(f: OptimizerConfigFile) -> Result<Self, Self::Error> {
        let d = OptimizerConfig::new(f.kind);
        let cfg = OptimizerConfig {
            kind: f.kind,
            lr: f.lr.unwrap_or(d.lr),
            beta1: f.beta1.unwrap_or(d.beta1),
            beta2: f.beta2.unwrap_or(d.beta2),
            beta3: f.beta3.unwrap_or(d.beta3),
            eps: f.eps.unwrap_or(d.eps),
            weight_decay: f.weight_decay.unwrap_or(d.weight_decay),
            agr: f.agr.unwrap_or(d.agr),
            clip_norm: f.clip_norm,
            centralize: f.centralize.unwrap_or(d.centralize),
            dampening: f.dampening.unwrap_or(d.dampening),
            adan_v_uses_regularized_prev: f
                .adan_v_uses_regularized_prev
                .unwrap_or(d.adan_v_uses_regularized_prev),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adamw_defaults() {
        let c = OptimizerConfig::new(OptimizerKind::Adamw);
        assert_eq!((c.lr, c.beta1, c.beta2, c.eps), (0.001, 0.9, 0.999, 1e-8));
        assert!(!c.agr.enabled);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn parse_kind() {
        assert_eq!("AdamW".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adamw);
        assert!("lamb".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn deserialize_fills_defaults() {
        let c: OptimizerConfig =
            serde_json::from_str(r#"{"kind":"adan","weight_decay":0.02,"agr":{"enabled":true}}"#)
                .unwrap();
        assert_eq!(c.beta1, 0.02);
        assert_eq!(c.weight_decay, 0.02);
        assert!(c.agr.enabled);
        let back: OptimizerConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn deserialize_rejects_invalid() {
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"sgd","lr":-1}"#).is_err());
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"adam","beta1":1.5}"#).is_err());
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"kind":"adam","bogus":1}"#).is_err());
    }
}
