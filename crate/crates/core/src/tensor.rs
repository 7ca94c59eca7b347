//! Dense, row-major `f64` tensors.
//!
//! This is deliberately small: elementwise zips and maps, a handful of
//! reductions, 2-D matrix products for the MLP, and seeded random fills.
//! There is no broadcasting and no striding; every operation checks shapes
//! exactly and returns a fresh tensor.
//!
//! Random fills use ChaCha8 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`, so a `(shape, distribution, seed)` triple
//! yields the same bits on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: dimensions must be non-empty and positive")]
    InvalidShape(Vec<usize>),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("data length {got} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("division by zero at flat index {index}")]
    DivisionByZero { index: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),
    #[error("expected a 2-D tensor, got shape {0:?}")]
    NotMatrix(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Abs,
    Neg,
    Square,
    Scale(f64),
    AddScalar(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    L1,
    L2,
    LInf,
    Sum,
    Mean,
}

/// Sampling distribution for [`rand_fill`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Normal { mean: f64, std: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Distribution {
    pub fn standard_normal() -> Self {
        Distribution::Normal { mean: 0.0, std: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Normal { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
            Distribution::LogNormal { mu, sigma } => {
                mu.is_finite() && sigma.is_finite() && sigma > 0.0
            }
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(TensorError::InvalidDistribution(format!("{self:?}")))
        }
    }

    /// Draws `count` samples from an existing generator.
    pub fn sample_n(&self, rng: &mut impl Rng, count: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let out = match *self {
            Distribution::Normal { mean, std } => {
                let d = Normal::new(mean, std)
                    .map_err(|e| TensorError::InvalidDistribution(e.to_string()))?;
                (0..count).map(|_| d.sample(rng)).collect()
            }
            Distribution::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma)
                    .map_err(|e| TensorError::InvalidDistribution(e.to_string()))?;
                (0..count).map(|_| d.sample(rng)).collect()
            }
            Distribution::Uniform { lo, hi } => {
                let d = Uniform::new(lo, hi)
                    .map_err(|e| TensorError::InvalidDistribution(e.to_string()))?;
                (0..count).map(|_| d.sample(rng)).collect()
            }
        };
        Ok(out)
    }
}

/// The generator behind every seeded operation in this workspace.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a salt (trial index, epoch, ...) into an
/// independent stream seed. SplitMix64 finalizer.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    /// Builds a tensor from row-major data. Rejects NaN and infinities.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected = check_shape(shape)?;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TensorError::NonFinite { index, value });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 1-D tensor from a slice.
    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::from_vec(&[values.len()], values.to_vec())
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut t = Self::zeros(&[n, n])?;
        for (i, &v) in values.iter().enumerate() {
            t.data[i * n + i] = v;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the flat buffer. Shape is fixed; callers are
    /// responsible for keeping values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `(rows, cols)` for a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::NotMatrix(self.shape.clone())),
        }
    }

    pub fn at2(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected: len,
                got: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        zip_binary(self, other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        zip_binary(self, other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        zip_binary(self, other, BinaryOp::Mul)
    }

    pub fn scale(&self, c: f64) -> DenseTensor {
        map_unary(self, UnaryOp::Scale(c))
    }

    pub fn abs(&self) -> DenseTensor {
        map_unary(self, UnaryOp::Abs)
    }

    pub fn l1(&self) -> f64 {
        reduce(self, Reduction::L1)
    }

    pub fn l2(&self) -> f64 {
        reduce(self, Reduction::L2)
    }

    pub fn linf(&self) -> f64 {
        reduce(self, Reduction::LInf)
    }

    pub fn sum(&self) -> f64 {
        reduce(self, Reduction::Sum)
    }

    pub fn mean(&self) -> f64 {
        reduce(self, Reduction::Mean)
    }

    /// Matrix product of `[m×k]` and `[k×n]`.
    pub fn matmul(&self, rhs: &DenseTensor) -> Result<DenseTensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseTensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<DenseTensor> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(DenseTensor {
            shape: vec![c, r],
            data: out,
        })
    }
}

pub fn zeros(shape: &[usize]) -> Result<DenseTensor> {
    DenseTensor::zeros(shape)
}

pub fn zip_binary(a: &DenseTensor, b: &DenseTensor, op: BinaryOp) -> Result<DenseTensor> {
    a.same_shape(b)?;
    let data = match op {
        BinaryOp::Add => a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        BinaryOp::Sub => a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
        BinaryOp::Mul => a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
        BinaryOp::Div => {
            if let Some(index) = b.data.iter().position(|&y| y == 0.0) {
                return Err(TensorError::DivisionByZero { index });
            }
            a.data.iter().zip(&b.data).map(|(x, y)| x / y).collect()
        }
    };
    Ok(DenseTensor {
        shape: a.shape.clone(),
        data,
    })
}

pub fn map_unary(a: &DenseTensor, op: UnaryOp) -> DenseTensor {
    let f: Box<dyn Fn(f64) -> f64> = match op {
        UnaryOp::Abs => Box::new(f64::abs),
        UnaryOp::Neg => Box::new(|x: f64| -x),
        UnaryOp::Square => Box::new(|x: f64| x * x),
        UnaryOp::Scale(c) => Box::new(move |x: f64| c * x),
        UnaryOp::AddScalar(c) => Box::new(move |x: f64| x + c),
    };
    DenseTensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

/// Sequential left-to-right sum of absolute values. Every L1 in the crate
/// goes through here so that coefficient computations agree bit-for-bit.
#[inline]
pub fn l1_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, x| acc + x.abs())
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, x| acc + x * x).sqrt()
}

pub fn reduce(a: &DenseTensor, kind: Reduction) -> f64 {
    match kind {
        Reduction::L1 => l1_norm(&a.data),
        Reduction::L2 => l2_norm(&a.data),
        Reduction::LInf => a.data.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        Reduction::Sum => a.data.iter().sum(),
        Reduction::Mean => a.data.iter().sum::<f64>() / a.data.len() as f64,
    }
}

pub fn rand_fill(shape: &[usize], distribution: Distribution, seed: u64) -> Result<DenseTensor> {
    let len = check_shape(shape)?;
    let mut rng = seeded_rng(seed);
    let data = distribution.sample_n(&mut rng, len)?;
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// Like [`rand_fill`] but draws from a caller-owned generator.
pub fn rand_fill_with(
    shape: &[usize],
    distribution: Distribution,
    rng: &mut impl Rng,
) -> Result<DenseTensor> {
    let len = check_shape(shape)?;
    let data = distribution.sample_n(rng, len)?;
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}
