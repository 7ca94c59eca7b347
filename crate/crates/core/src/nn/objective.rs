use super::NnError;
use crate::linalg::symmetric_eigenvalues;
use crate::tensor::DenseTensor;

/// `L(w) = 0.5 * w^T A w` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    a: DenseTensor,
}

impl Quadratic {
    pub fn new(a: DenseTensor) -> Result<Self, NnError> {
        let (r, c) = a.dims2()?;
        if r != c {
            return Err(NnError::NotSquare(a.shape().to_vec()));
        }
        let scale = a.linf().max(1.0);
        for i in 0..r {
            for j in 0..i {
                if (a.at2(i, j) - a.at2(j, i)).abs() > 1e-12 * scale {
                    return Err(NnError::NotSymmetric { row: i, col: j });
                }
            }
        }
        let min_eig = symmetric_eigenvalues(&a)?[0];
        if min_eig < -1e-10 * scale {
            return Err(NnError::NotPsd { min_eigenvalue: min_eig });
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &DenseTensor {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.shape()[0]
    }

    /// `A w`, evaluated row by row.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.a.data()[i * n..(i + 1) * n]
                    .iter()
                    .zip(w)
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Quadratic(Quadratic),
    /// `(a - x)^2 + b (y - x^2)^2` in two dimensions.
    Rosenbrock { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub loss: f64,
    pub gradient: DenseTensor,
    pub hessian: Option<DenseTensor>,
}

impl Objective {
    pub fn dim(&self) -> usize {
        match self {
            Objective::Quadratic(q) => q.dim(),
            Objective::Rosenbrock { .. } => 2,
        }
    }

    pub fn loss(&self, w: &DenseTensor) -> Result<f64, NnError> {
        Ok(objective_eval(self, w)?.loss)
    }
}

pub fn objective_eval(obj: &Objective, w: &DenseTensor) -> Result<ObjectiveEval, NnError> {
    if w.len() != obj.dim() {
        return Err(NnError::DimensionMismatch {
            what: "objective point",
            expected: obj.dim(),
            got: w.len(),
        });
    }
    let x = w.data();
    match obj {
        Objective::Quadratic(q) => {
            let grad = q.gradient(x);
            let loss = 0.5 * grad.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>();
            Ok(ObjectiveEval {
                loss,
                gradient: DenseTensor::from_vec(w.shape(), grad)?,
                hessian: Some(q.a.clone()),
            })
        }
        &Objective::Rosenbrock { a, b } => {
            let (x0, x1) = (x[0], x[1]);
            let r = x1 - x0 * x0;
            let loss = (a - x0).powi(2) + b * r * r;
            let grad = vec![-2.0 * (a - x0) - 4.0 * b * x0 * r, 2.0 * b * r];
            let h01 = -4.0 * b * x0;
            let hessian = vec![2.0 - 4.0 * b * r + 8.0 * b * x0 * x0, h01, h01, 2.0 * b];
            Ok(ObjectiveEval {
                loss,
                gradient: DenseTensor::from_vec(w.shape(), grad)?,
                hessian: Some(DenseTensor::from_vec(&[2, 2], hessian)?),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseTensor {
        DenseTensor::vector(x).unwrap()
    }

    #[test]
    fn identity_quadratic() {
        let q = Objective::Quadratic(Quadratic::new(DenseTensor::identity(2).unwrap()).unwrap());
        let e = objective_eval(&q, &v(&[2.0, 2.0])).unwrap();
        assert_eq!(e.loss, 4.0);
        assert_eq!(e.gradient.data(), &[2.0, 2.0]);
        assert_eq!(e.hessian.unwrap(), DenseTensor::identity(2).unwrap());
    }

    #[test]
    fn diagonal_quadratic() {
        let q = Objective::Quadratic(Quadratic::new(DenseTensor::diag(&[1.0, 4.0]).unwrap()).unwrap());
        let e = objective_eval(&q, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(e.loss, 2.5);
        assert_eq!(e.gradient.data(), &[1.0, 4.0]);
    }

    #[test]
    fn rosenbrock_minimum() {
        let r = Objective::Rosenbrock { a: 1.0, b: 100.0 };
        let e = objective_eval(&r, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(e.loss, 0.0);
        assert_eq!(e.gradient.data(), &[0.0, 0.0]);
        let h = e.hessian.unwrap();
        assert_eq!(h.data(), &[802.0, -400.0, -400.0, 200.0]);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = DenseTensor::from_vec(&[2, 2], vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(Quadratic::new(asym), Err(NnError::NotSymmetric { .. })));
        let indef = DenseTensor::diag(&[1.0, -1.0]).unwrap();
        assert!(matches!(Quadratic::new(indef), Err(NnError::NotPsd { .. })));
        let rect = DenseTensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(Quadratic::new(rect), Err(NnError::NotSquare(_))));
        assert!(Quadratic::new(DenseTensor::zeros(&[3, 3]).unwrap()).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let r = Objective::Rosenbrock { a: 1.0, b: 100.0 };
        assert!(matches!(
            objective_eval(&r, &v(&[1.0, 1.0, 1.0])),
            Err(NnError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn losses_non_negative() {
        let q = Objective::Quadratic(
            Quadratic::new(DenseTensor::from_vec(&[2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap()).unwrap(),
        );
        for p in [[1.0, -1.0], [0.3, 2.0], [-5.0, 0.1]] {
            assert!(q.loss(&v(&p)).unwrap() >= 0.0);
        }
    }
}
