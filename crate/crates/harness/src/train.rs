//! Training runs, paired A/B runs over several seeds, and JSONL output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use agr_core::agr::{should_apply, ParamRole};
use agr_core::nn::{accuracy, softmax_cross_entropy, MlpModel};
use agr_core::optim::Optimizer;
use agr_core::tensor::{derive_seed, seeded_rng};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig};
use crate::data::{generate_blobs, generate_moons, load_csv_dataset, split_seed, Dataset};
use crate::{HarnessError, Result};

const INIT_SALT: u64 = 0x494e_4954;
const SHUFFLE_SALT: u64 = 0x5348_5546;

/// One epoch of one run. Field names are part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub run_id: String,
    pub seed: u64,
    /// Zero-based, matching `agr_until_epoch`.
    pub epoch: u64,
    /// Mean cross-entropy over the epoch's batches, weighted by batch size.
    pub train_loss: f64,
    pub test_acc: f64,
    pub wall_ms: f64,
    pub agr_active: bool,
    pub optimizer: String,
    /// Learning rate used in this epoch, after the schedule.
    pub lr: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub variant: Variant,
    pub records: Vec<TrainRecord>,
    pub model: MlpModel,
    /// Tensors AGR was applied to, per epoch.
    pub agr_applications: Vec<u64>,
    pub final_train_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Agr,
    Vanilla,
}

impl Variant {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        if cfg.optimizer.agr.enabled {
            Variant::Agr
        } else {
            Variant::Vanilla
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Agr => "agr",
            Variant::Vanilla => "vanilla",
        }
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    Ok(match spec {
        DatasetSpec::Blobs(p) => generate_blobs(p)?,
        DatasetSpec::Moons(p) => generate_moons(p)?,
        DatasetSpec::Csv { path, label_column } => load_csv_dataset(path, label_column)?,
    })
}

pub fn run_id(cfg: &ExperimentConfig) -> String {
    let name = if cfg.name.is_empty() { "run" } else { &cfg.name };
    format!("{name}-{}-s{}", Variant::of(cfg).name(), cfg.seed)
}

/// Trains one model. Everything except `wall_ms` is a function of the
/// config: initialization uses a stream derived from `seed`, and epoch
/// `e` shuffles with a stream derived from `(seed, e)`, so runs that
/// differ only in the AGR switch see the same batches.
pub fn train_loop(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    train_on(cfg, &data)
}

pub fn train_on(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunOutput> {
    let widths = &cfg.model.widths;
    if widths[0] != data.dim() || widths[widths.len() - 1] != data.classes {
        return Err(HarnessError::Invalid(format!(
            "widths {widths:?} do not fit data with {} features and {} classes",
            data.dim(),
            data.classes
        )));
    }
    let (train, test) = data.split(cfg.train_fraction, split_seed(cfg.data_seed))?;
    let mut model = MlpModel::init(widths, cfg.model.activation, derive_seed(cfg.seed, INIT_SALT))?;
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let (test_x, test_y) = test.gather(&(0..test.len()).collect::<Vec<_>>())?;
    let shuffle_base = derive_seed(cfg.seed, SHUFFLE_SALT);
    let id = run_id(cfg);

    let mut records = Vec::with_capacity(cfg.epochs as usize);
    let mut applications = Vec::with_capacity(cfg.epochs as usize);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let multiplier = cfg.lr_schedule.multiplier(epoch, cfg.epochs);
        opt.set_schedule_multiplier(multiplier);
        order.sort_unstable();
        order.shuffle(&mut seeded_rng(derive_seed(shuffle_base, epoch)));

        let mut loss_sum = 0.0;
        let mut applied = 0u64;
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = train.gather(batch)?;
            let logits = model.forward(&x)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &y)?;
            let grads = model.backward(&dlogits)?;
            let mut params = model.param_refs(&grads);
            applied += opt.step(&mut params, epoch)?.regularized as u64;
            loss_sum += loss * batch.len() as f64;
        }
        let test_acc = accuracy(&model.predict(&test_x)?, &test_y)?;
        let wall_ms = if cfg.record_wall_time {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        records.push(TrainRecord {
            run_id: id.clone(),
            seed: cfg.seed,
            epoch,
            train_loss: loss_sum / train.len() as f64,
            test_acc,
            wall_ms,
            agr_active: should_apply(ParamRole::DenseWeight, &cfg.optimizer.agr, epoch),
            optimizer: cfg.optimizer.kind.name().to_string(),
            lr: cfg.optimizer.lr * multiplier,
            weight_decay: cfg.optimizer.weight_decay,
        });
        applications.push(applied);
    }

    let (train_x, train_y) = train.gather(&(0..train.len()).collect::<Vec<_>>())?;
    let final_train_acc = accuracy(&model.predict(&train_x)?, &train_y)?;
    Ok(RunOutput {
        run_id: id,
        variant: Variant::of(cfg),
        records,
        model,
        agr_applications: applications,
        final_train_acc,
    })
}

/// Per-epoch mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub variant: Variant,
    pub epoch: u64,
    pub runs: usize,
    pub train_loss_mean: f64,
    pub train_loss_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub final_train_loss_mean: f64,
    pub final_train_loss_std: f64,
    pub final_test_acc_mean: f64,
    pub final_test_acc_std: f64,
}

/// AGR minus vanilla at the last epoch, from the seed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub train_loss: f64,
    pub test_acc: f64,
    /// AGR mean final loss over vanilla mean final loss.
    pub train_loss_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub epochs: u64,
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<Delta>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Ordered by seed, then AGR before vanilla.
    pub runs: Vec<RunOutput>,
    pub aggregates: Vec<AggregateRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn records(&self) -> impl Iterator<Item = &TrainRecord> {
        self.runs.iter().flat_map(|r| r.records.iter())
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs seeds `seed, seed + 1, ..., seed + repeats - 1`. With `paired`,
/// each seed is trained with AGR on and off; otherwise with the config's
/// own AGR setting. Runs execute in parallel; output order is fixed.
pub fn run_experiment(cfg: &ExperimentConfig, paired: bool, repeats: usize) -> Result<ExperimentOutput> {
    if repeats == 0 {
        return Err(HarnessError::Invalid("repeats must be at least 1".into()));
    }
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let jobs: Vec<ExperimentConfig> = seeds
        .iter()
        .flat_map(|&s| {
            let base = cfg.with_seed(s);
            if paired {
                vec![base.with_agr_enabled(true), base.with_agr_enabled(false)]
            } else {
                vec![base]
            }
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|job| train_on(job, &data))
        .collect::<Result<Vec<_>>>()?;

    let mut variants: Vec<Variant> = Vec::new();
    for r in &runs {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
    }
    let mut aggregates = Vec::new();
    let mut summaries = Vec::new();
    for &variant in &variants {
        let group: Vec<&RunOutput> = runs.iter().filter(|r| r.variant == variant).collect();
        for epoch in 0..cfg.epochs as usize {
            let losses: Vec<f64> = group.iter().map(|r| r.records[epoch].train_loss).collect();
            let accs: Vec<f64> = group.iter().map(|r| r.records[epoch].test_acc).collect();
            let (lm, ls) = mean_std(&losses);
            let (am, asd) = mean_std(&accs);
            aggregates.push(AggregateRecord {
                variant,
                epoch: epoch as u64,
                runs: group.len(),
                train_loss_mean: lm,
                train_loss_std: ls,
                test_acc_mean: am,
                test_acc_std: asd,
            });
        }
        let last = aggregates.last().expect("epochs >= 1");
        summaries.push(VariantSummary {
            variant,
            runs: group.len(),
            final_train_loss_mean: last.train_loss_mean,
            final_train_loss_std: last.train_loss_std,
            final_test_acc_mean: last.test_acc_mean,
            final_test_acc_std: last.test_acc_std,
        });
    }
    let find = |v: Variant| summaries.iter().find(|s| s.variant == v);
    let delta = match (find(Variant::Agr), find(Variant::Vanilla)) {
        (Some(a), Some(b)) => Some(Delta {
            train_loss: a.final_train_loss_mean - b.final_train_loss_mean,
            test_acc: a.final_test_acc_mean - b.final_test_acc_mean,
            train_loss_ratio: a.final_train_loss_mean / b.final_train_loss_mean,
        }),
        _ => None,
    };
    let summary = Summary {
        name: cfg.name.clone(),
        epochs: cfg.epochs,
        seeds,
        variants: summaries,
        delta,
    };
    Ok(ExperimentOutput { runs, aggregates, summary })
}

/// `dir/stem.jsonl` -> `dir/stem{suffix}`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".to_string());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(HarnessError::from))
        .collect()
}

/// Writes records to `path`, per-epoch aggregates to
/// `<stem>.aggregate.jsonl` and the summary to `<stem>.summary.json`.
/// Returns the three paths.
pub fn write_outputs(out: &ExperimentOutput, path: &Path) -> Result<[PathBuf; 3]> {
    let agg = sibling_path(path, ".aggregate.jsonl");
    let summary = sibling_path(path, ".summary.json");
    write_jsonl(path, out.records())?;
    write_jsonl(&agg, &out.aggregates)?;
    let text = serde_json::to_string_pretty(&out.summary)?;
    std::fs::write(&summary, text + "\n").map_err(io_err(&summary))?;
    Ok([path.to_path_buf(), agg, summary])
}
