//! Wall-clock cost of AGR inside a full training step.

use std::time::Instant;

use agr_core::nn::{softmax_cross_entropy, MlpModel};
use agr_core::optim::Optimizer;
use agr_core::tensor::{derive_seed, rand_fill_with, seeded_rng, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub steps: usize,
    pub params: usize,
    /// Median forward + backward + optimizer step.
    pub vanilla_ns_per_step: f64,
    pub agr_ns_per_step: f64,
    pub ratio: f64,
    /// Median of the optimizer call alone.
    pub vanilla_optimizer_ns: f64,
    pub agr_optimizer_ns: f64,
    pub optimizer_ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Arm {
    model: MlpModel,
    opt: Optimizer,
    total: Vec<f64>,
    optim: Vec<f64>,
}

/// Compares AGR off (`vanilla_*`) against AGR on (`agr_*`) using the
/// config's model widths, optimizer and batch size on one fixed random
/// batch. The two arms alternate which goes first on every step.
pub fn bench_overhead(cfg: &ExperimentConfig, steps: usize) -> Result<OverheadReport> {
    bench_pair(cfg, steps, false, true)
}

/// Same protocol with an explicit AGR switch per arm; `(false, false)`
/// measures the noise floor.
pub fn bench_pair(cfg: &ExperimentConfig, steps: usize, first_agr: bool, second_agr: bool) -> Result<OverheadReport> {
    if steps < 100 {
        return Err(HarnessError::Invalid(format!("bench needs at least 100 steps, got {steps}")));
    }
    let widths = &cfg.model.widths;
    let mut rng = seeded_rng(derive_seed(cfg.seed, 0xbe4c));
    let x = rand_fill_with(&[cfg.batch_size, widths[0]], Distribution::standard_normal(), &mut rng)?;
    let classes = widths[widths.len() - 1];
    let y: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..classes)).collect();
    let model = MlpModel::init(widths, cfg.model.activation, cfg.seed)?;
    let params = model.param_count();
    let arm = |agr: bool| -> Result<Arm> {
        let mut oc = cfg.optimizer.clone();
        oc.agr.enabled = agr;
        Ok(Arm {
            model: model.clone(),
            opt: Optimizer::new(oc)?,
            total: Vec::with_capacity(steps),
            optim: Vec::with_capacity(steps),
        })
    };
    let mut arms = [arm(first_agr)?, arm(second_agr)?];
    let warmup = (steps / 10).min(50);
    for i in 0..warmup + steps {
        let order = if i % 2 == 0 { [0, 1] } else { [1, 0] };
        for a in order {
            let arm = &mut arms[a];
            let t0 = Instant::now();
            let logits = arm.model.forward(&x)?;
            let (_, dl) = softmax_cross_entropy(&logits, &y)?;
            let grads = arm.model.backward(&dl)?;
            let t1 = Instant::now();
            let mut refs = arm.model.param_refs(&grads);
            arm.opt.step(&mut refs, 0)?;
            let t2 = Instant::now();
            if i >= warmup {
                arm.total.push((t2 - t0).as_nanos() as f64);
                arm.optim.push((t2 - t1).as_nanos() as f64);
            }
        }
    }
    let [a, b] = arms;
    let (va, vb) = (median(a.total), median(b.total));
    let (oa, ob) = (median(a.optim), median(b.optim));
    Ok(OverheadReport {
        steps,
        params,
        vanilla_ns_per_step: va,
        agr_ns_per_step: vb,
        ratio: vb / va,
        vanilla_optimizer_ns: oa,
        agr_optimizer_ns: ob,
        optimizer_ratio: ob / oa,
    })
}
