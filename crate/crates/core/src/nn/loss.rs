use super::NnError;
use crate::tensor::DenseTensor;

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(
    logits: &DenseTensor,
    labels: &[usize],
) -> Result<(f64, DenseTensor), NnError> {
    let (batch, classes) = logits.dims2()?;
    if labels.len() != batch {
        return Err(NnError::DimensionMismatch {
            what: "labels",
            expected: batch,
            got: labels.len(),
        });
    }
    let mut grad = vec![0.0; batch * classes];
    let mut total = 0.0;
    let inv_batch = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(NnError::LabelOutOfRange {
                index: b,
                label,
                classes,
            });
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = max + sum_exp.ln();
        total += log_sum - row[label];
        let g = &mut grad[b * classes..(b + 1) * classes];
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp() / sum_exp * inv_batch;
        }
        g[label] -= inv_batch;
    }
    Ok((total * inv_batch, DenseTensor::from_vec(&[batch, classes], grad)?))
}

/// Half squared error averaged over the batch: `sum (p - t)^2 / (2 B)`.
/// Gradient is `(p - t) / B`.
pub fn mse(pred: &DenseTensor, target: &DenseTensor) -> Result<(f64, DenseTensor), NnError> {
    pred.same_shape(target)?;
    let (batch, _) = pred.dims2()?;
    let inv_batch = 1.0 / batch as f64;
    let diff = pred.sub(target)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() * 0.5 * inv_batch;
    Ok((loss, diff.scale(inv_batch)))
}

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(logits: &DenseTensor, labels: &[usize]) -> Result<f64, NnError> {
    let (batch, classes) = logits.dims2()?;
    if labels.len() != batch {
        return Err(NnError::DimensionMismatch {
            what: "labels",
            expected: batch,
            got: labels.len(),
        });
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(b, &label)| {
            let row = &logits.data()[b * classes..(b + 1) * classes];
            let mut best = 0;
            for (c, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = c;
                }
            }
            best == label
        })
        .count();
    Ok(correct as f64 / batch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DenseTensor {
        DenseTensor::from_vec(&[r, c], v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let (loss, _) = softmax_cross_entropy(&m(2, 5, &[0.3; 10]), &[0, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let (loss, _) = softmax_cross_entropy(&m(1, 3, &[500.0, 0.0, -20.0]), &[0]).unwrap();
        assert!((0.0..1e-12).contains(&loss));
    }

    #[test]
    fn gradient_for_two_equal_logits() {
        let (_, g) = softmax_cross_entropy(&m(1, 2, &[0.0, 0.0]), &[0]).unwrap();
        assert_eq!(g.data(), &[-0.5, 0.5]);
        let (_, g) = softmax_cross_entropy(&m(2, 2, &[0.0; 4]), &[0, 0]).unwrap();
        assert_eq!(g.data(), &[-0.25, 0.25, -0.25, 0.25]);
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&m(1, 2, &[0.0, 0.0]), &[2]),
            Err(NnError::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn mse_values() {
        let (loss, g) = mse(&m(1, 2, &[1.0, 3.0]), &m(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(g.data(), &[1.0, 2.0]);
    }

    #[test]
    fn accuracy_counts_argmax() {
        let logits = m(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 1.0]);
        assert!((accuracy(&logits, &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
