use std::sync::{Arc, Mutex};

use super::OptimizerKind;

/// What one parameter's moment accumulators received during a step.
///
/// `raw` is the gradient after weight-decay coupling and the baseline
/// transforms but before AGR. `first` is what entered the first moment
/// (`m`, or the update numerator for SGD/RMSprop). `second` is the tensor
/// whose square entered the second-moment accumulator (`v` for
/// Adam/AdamW/RMSprop, `n` for Adan); it is empty for SGD and SGDM.
#[derive(Debug)]
pub struct MomentInputs<'a> {
    pub step: u64,
    pub param: usize,
    pub kind: OptimizerKind,
    pub regularized: bool,
    pub raw: &'a [f64],
    pub first: &'a [f64],
    pub second: &'a [f64],
}

pub trait StepProbe: Send {
    fn record(&mut self, inputs: &MomentInputs<'_>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRecord {
    pub step: u64,
    pub param: usize,
    pub kind: OptimizerKind,
    pub regularized: bool,
    pub raw: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Probe that keeps an owned copy of every record. Clone the handle before
/// installing the probe to read the records back afterwards.
#[derive(Debug, Clone, Default)]
pub struct RecordingProbe {
    records: Arc<Mutex<Vec<MomentRecord>>>,
}

impl RecordingProbe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<MomentRecord> {
        self.records.lock().expect("probe mutex poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("probe mutex poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl StepProbe for RecordingProbe {
    fn record(&mut self, inputs: &MomentInputs<'_>) {
        self.records
            .lock()
            .expect("probe mutex poisoned")
            .push(MomentRecord {
                step: inputs.step,
                param: inputs.param,
                kind: inputs.kind,
                regularized: inputs.regularized,
                raw: inputs.raw.to_vec(),
                first: inputs.first.to_vec(),
                second: inputs.second.to_vec(),
            });
    }
}
