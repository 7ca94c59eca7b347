//! Small dense linear-algebra helpers backed by `nalgebra`.

use nalgebra::DMatrix;

use crate::tensor::{DenseTensor, Result};

pub fn to_matrix(t: &DenseTensor) -> Result<DMatrix<f64>> {
    let (r, c) = t.dims2()?;
    Ok(DMatrix::from_row_slice(r, c, t.data()))
}

/// Largest singular value.
pub fn spectral_norm(t: &DenseTensor) -> Result<f64> {
    let m = to_matrix(t)?;
    Ok(m.singular_values().iter().copied().fold(0.0, f64::max))
}

/// Eigenvalues of a symmetric matrix, ascending. Only the lower triangle
/// is trusted.
pub fn symmetric_eigenvalues(t: &DenseTensor) -> Result<Vec<f64>> {
    let m = to_matrix(t)?;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let d = DenseTensor::diag(&[1.0, -4.0, 2.0]).unwrap();
        assert!((spectral_norm(&d).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sorted() {
        let a = DenseTensor::from_vec(&[2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }
}
