//! Per-parameter update loops.
//!
//! Every kernel takes the pre-AGR gradient `g` and `agr_l1`, which is
//! `Some(sum |g|)` when AGR applies to this tensor (and the sum is
//! non-zero). The regularized value `(1 - |g_i| / l1) * g_i` is formed
//! inline so the AGR path costs one extra reduction and a multiply.
//! Operation order in each loop is the printed algorithm's, which is what
//! the reference traces in the tests rely on for bit-identical results.

use crate::agr::keep_factor;

#[inline(always)]
fn regularized(g: f64, agr_l1: Option<f64>) -> f64 {
    match agr_l1 {
        Some(l1) => keep_factor(g, l1) * g,
        None => g,
    }
}

/// `w <- w - eta * psi(g)`, evaluated as `w - (eta * (1 - alpha)) * g`.
pub(super) fn sgd(w: &mut [f64], g: &[f64], agr_l1: Option<f64>, eta: f64) {
    match agr_l1 {
        Some(l1) => {
            for (wi, &gi) in w.iter_mut().zip(g) {
                *wi -= (eta * keep_factor(gi, l1)) * gi;
            }
        }
        None => {
            for (wi, &gi) in w.iter_mut().zip(g) {
                *wi -= eta * gi;
            }
        }
    }
}

pub(super) fn sgdm(
    w: &mut [f64],
    g: &[f64],
    agr_l1: Option<f64>,
    m: &mut [f64],
    eta: f64,
    beta1: f64,
    dampening: bool,
) {
    let keep = 1.0 - beta1;
    for ((wi, &gi), mi) in w.iter_mut().zip(g).zip(m.iter_mut()) {
        let gb = regularized(gi, agr_l1);
        *mi = if dampening {
            beta1 * *mi + keep * gb
        } else {
            beta1 * *mi + gb
        };
        *wi -= eta * *mi;
    }
}

pub(super) struct AdamParams {
    pub lr: f64,
    pub schedule: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    /// AdamW subtracts `weight_decay * theta` in the update as well.
    pub decoupled: bool,
}

pub(super) fn adam(
    w: &mut [f64],
    g: &[f64],
    agr_l1: Option<f64>,
    m: &mut [f64],
    v: &mut [f64],
    p: &AdamParams,
) {
    let t = p.step as f64;
    let bias1 = 1.0 - p.beta1.powf(t);
    let bias2 = 1.0 - p.beta2.powf(t);
    let (c1, c2) = (1.0 - p.beta1, 1.0 - p.beta2);
    for (((wi, &gi), mi), vi) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        let gb = regularized(gi, agr_l1);
        *mi = p.beta1 * *mi + c1 * gb;
        *vi = p.beta2 * *vi + c2 * gi * gi;
        let mh = *mi / bias1;
        let vh = *vi / bias2;
        if p.decoupled {
            *wi -= p.schedule * (p.lr * mh / (vh.sqrt() + p.eps) + p.weight_decay * *wi);
        } else {
            *wi -= p.schedule * p.lr * mh / (vh.sqrt() + p.eps);
        }
    }
}

pub(super) fn rmsprop(
    w: &mut [f64],
    g: &[f64],
    agr_l1: Option<f64>,
    v: &mut [f64],
    eta: f64,
    beta2: f64,
    eps: f64,
) {
    let c2 = 1.0 - beta2;
    for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        let gb = regularized(gi, agr_l1);
        *vi = beta2 * *vi + c2 * gi * gi;
        *wi -= eta * gb / (vi.sqrt() + eps);
    }
}

pub(super) struct AdanParams {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Steps taken since initialization or the last restart (0 = this call
    /// supplies `g_0`).
    pub k: u64,
    pub regularized_prev: bool,
}

pub(super) struct AdanSlots<'a> {
    pub m: &'a mut [f64],
    pub v: &'a mut [f64],
    pub n: &'a mut [f64],
    /// Raw `g_{k-1}`; overwritten with this step's raw gradient.
    pub prev: &'a mut [f64],
    /// Regularized `g_{k-1}`, only maintained for the variant.
    pub prev_regularized: &'a mut [f64],
}

pub(super) fn adan(w: &mut [f64], g: &[f64], agr_l1: Option<f64>, s: AdanSlots<'_>, p: &AdanParams) {
    let (c1, c2, c3) = (1.0 - p.beta1, 1.0 - p.beta2, 1.0 - p.beta3);
    let decay = 1.0 + p.weight_decay * p.eta;
    for i in 0..w.len() {
        let gi = g[i];
        let gb = regularized(gi, agr_l1);
        if p.k == 0 {
            s.m[i] = gb;
            s.v[i] = 0.0;
            s.n[i] = gi * gi;
        } else {
            let prev_raw = s.prev[i];
            let prev_v = if p.regularized_prev {
                s.prev_regularized[i]
            } else {
                prev_raw
            };
            s.m[i] = c1 * s.m[i] + p.beta1 * gb;
            s.v[i] = if p.k == 1 {
                gb - prev_v
            } else {
                c2 * s.v[i] + p.beta2 * (gb - prev_v)
            };
            let d = gi + c2 * (gi - prev_raw);
            s.n[i] = c3 * s.n[i] + p.beta3 * d * d;
        }
        let step = p.eta / (s.n[i].sqrt() + p.eps);
        w[i] = (w[i] - step * (s.m[i] + c2 * s.v[i])) / decay;
        s.prev[i] = gi;
        if p.regularized_prev {
            s.prev_regularized[i] = gb;
        }
    }
}
