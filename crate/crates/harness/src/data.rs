//! Labeled classification datasets: synthetic generators and CSV I/O.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use agr_core::tensor::{derive_seed, seeded_rng, DenseTensor, Distribution};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {source}")]
    Csv {
        path: PathBuf,
        line: u64,
        source: csv::Error,
    },
    #[error("{path}: no column named `{column}`")]
    UnknownColumn { path: PathBuf, column: String },
    #[error("{path}, line {line}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error(transparent)]
    Tensor(#[from] agr_core::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Features `[n, dim]` with integer class labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseTensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Original label strings, indexed by class, when loaded from CSV.
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: DenseTensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = features.dims2()?;
        if labels.len() != n {
            return Err(DataError::InvalidParams(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::InvalidParams(format!(
                "label {bad} outside 0..{classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    /// Rows at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Result<(DenseTensor, Vec<usize>)> {
        let d = self.dim();
        let src = self.features.data();
        let mut x = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            x.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((DenseTensor::from_vec(&[indices.len(), d], x)?, y))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (features, labels) = self.gather(indices)?;
        Ok(Self {
            features,
            labels,
            classes: self.classes,
            class_names: self.class_names.clone(),
        })
    }

    /// Shuffled train/test split with `train_fraction` of the rows (at
    /// least one row on each side) going to training.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DataError::InvalidParams(format!(
                "split fraction {train_fraction} outside (0, 1)"
            )));
        }
        let n = self.len();
        if n < 2 {
            return Err(DataError::InvalidParams(format!("cannot split {n} rows")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeded_rng(seed));
        let cut = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        Ok((self.subset(&idx[..cut])?, self.subset(&idx[cut..])?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobsParams {
    pub n: usize,
    pub classes: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoonsParams {
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Isotropic Gaussian clusters around centers drawn uniformly from
/// `[-10, 10]^dim`. Row `i` belongs to class `i % classes`.
pub fn generate_blobs(p: &BlobsParams) -> Result<Dataset> {
    if p.classes < 2 || p.n < p.classes {
        return Err(DataError::InvalidParams(format!(
            "blobs need n >= classes >= 2 (n={}, classes={})",
            p.n, p.classes
        )));
    }
    if p.dim == 0 || !(p.spread >= 0.0 && p.spread.is_finite()) {
        return Err(DataError::InvalidParams(format!(
            "blobs need dim >= 1 and a finite spread >= 0 (dim={}, spread={})",
            p.dim, p.spread
        )));
    }
    let mut rng = seeded_rng(p.seed);
    let centers = Distribution::Uniform { lo: -10.0, hi: 10.0 }
        .sample_n(&mut rng, p.classes * p.dim)?;
    let noise = Distribution::standard_normal().sample_n(&mut rng, p.n * p.dim)?;
    let mut x = Vec::with_capacity(p.n * p.dim);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let c = i % p.classes;
        for j in 0..p.dim {
            x.push(centers[c * p.dim + j] + p.spread * noise[i * p.dim + j]);
        }
        labels.push(c);
    }
    Dataset::new(DenseTensor::from_vec(&[p.n, p.dim], x)?, labels, p.classes)
}

/// Two interleaving half circles with Gaussian noise. Row `i` belongs to
/// class `i % 2`.
pub fn generate_moons(p: &MoonsParams) -> Result<Dataset> {
    if p.n < 2 {
        return Err(DataError::InvalidParams(format!("moons need n >= 2 (n={})", p.n)));
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(DataError::InvalidParams(format!("noise {} must be >= 0", p.noise)));
    }
    let mut rng = seeded_rng(p.seed);
    let mut x = Vec::with_capacity(2 * p.n);
    let mut labels = Vec::with_capacity(p.n);
    for i in 0..p.n {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let (a, b) = if i % 2 == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x.push(a);
        x.push(b);
        labels.push(i % 2);
    }
    if p.noise > 0.0 {
        let noise = Distribution::Normal { mean: 0.0, std: p.noise }.sample_n(&mut rng, 2 * p.n)?;
        for (v, e) in x.iter_mut().zip(noise) {
            *v += e;
        }
    }
    Dataset::new(DenseTensor::from_vec(&[p.n, 2], x)?, labels, 2)
}

/// Reads a headed, comma-delimited file. Every column except
/// `label_column` must hold finite numbers; labels are arbitrary strings
/// mapped to class indices in order of first appearance.
pub fn load_csv_dataset(path: &Path, label_column: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let csv_err = |line: u64, source: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        line,
        source,
    };
    let headers = reader.headers().map_err(|e| csv_err(1, e))?.clone();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::UnknownColumn {
            path: path.to_path_buf(),
            column: label_column.to_string(),
        })?;
    let dim = headers.len() - 1;

    let mut x = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in record.iter().enumerate() {
            if col == label_at {
                let next = names.len();
                let id = *index.entry(field.to_string()).or_insert_with(|| {
                    names.push(field.to_string());
                    next
                });
                labels.push(id);
                continue;
            }
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => x.push(v),
                _ => {
                    return Err(DataError::NonNumeric {
                        path: path.to_path_buf(),
                        line,
                        column: headers[col].to_string(),
                        value: field.to_string(),
                    })
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
        });
    }
    let n = labels.len();
    let mut ds = Dataset::new(DenseTensor::from_vec(&[n, dim], x)?, labels, names.len())?;
    ds.class_names = Some(names);
    Ok(ds)
}

/// Writes features as `x0..x{d-1}` followed by `label_column`. Labels are
/// written as their class names when present, otherwise as indices.
pub fn write_csv_dataset(ds: &Dataset, path: &Path, label_column: &str) -> Result<()> {
    let io = |source: std::io::Error| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let csv_err = |source: csv::Error| DataError::Csv {
        path: path.to_path_buf(),
        line: 0,
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = ds.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push(label_column.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (i, &label) in ds.labels.iter().enumerate() {
        let mut row: Vec<String> = ds.features.data()[i * d..(i + 1) * d]
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        row.push(match &ds.class_names {
            Some(names) => names[label].clone(),
            None => label.to_string(),
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

/// Salt for the train/test split stream.
pub const SPLIT_SALT: u64 = 0x0053_504c_4954;

pub fn split_seed(data_seed: u64) -> u64 {
    derive_seed(data_seed, SPLIT_SALT)
}
