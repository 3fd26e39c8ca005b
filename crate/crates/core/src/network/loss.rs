//! Reconstruction, softmax and metric-L2 losses for single examples and
//! batches. Batch losses are means over the batch.

use crate::error::{check_dim, FtlError, Result};
use crate::numerics::matrix::{dot, squared_distance, Matrix};

/// `‖x' − x‖²`, summed over dimensions.
pub fn loss_recon(x: &[f64], recon: &[f64]) -> Result<f64> {
    check_dim(x.len(), recon.len())?;
    Ok(squared_distance(x, recon))
}

pub fn loss_recon_batch(pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    let mut total = 0.0;
    for (x, r) in pairs {
        total += loss_recon(x, r)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Max-shifted softmax probabilities.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// `−log softmax(logits)[label]`, stabilised by subtracting the max logit.
pub fn loss_softmax(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(FtlError::LabelOutOfRange {
            label,
            n_classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - (logits[label] - max))
}

pub fn loss_softmax_batch(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    check_dim(logits.len(), labels.len())?;
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(labels) {
        total += loss_softmax(z, y)?;
    }
    Ok(total / logits.len() as f64)
}

/// `‖W f‖²`: squared norm of the classifier output.
pub fn loss_ml2(w: &Matrix, f: &[f64]) -> Result<f64> {
    let z = w.matvec(f)?;
    Ok(dot(&z, &z))
}

pub fn loss_ml2_batch(w: &Matrix, features: &[Vec<f64>]) -> Result<f64> {
    if features.is_empty() {
        return Err(FtlError::EmptyBatch);
    }
    let mut total = 0.0;
    for f in features {
        total += loss_ml2(w, f)?;
    }
    Ok(total / features.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recon_examples() {
        assert_eq!(loss_recon(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_recon(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        let batch = loss_recon_batch(&[(&[0.0, 0.0], &[3.0, 4.0]), (&[0.0], &[3.0])]).unwrap();
        assert_eq!(batch, 17.0);
        assert!(loss_recon(&[0.0], &[1.0, 2.0]).is_err());
        assert!(matches!(loss_recon_batch(&[]), Err(FtlError::EmptyBatch)));
    }

    #[test]
    fn softmax_examples() {
        let l = loss_softmax(&[0.3; 10], 4).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let l = loss_softmax(&[1000.0, 0.0], 0).unwrap();
        assert!(l.is_finite() && l.abs() < 1e-300);
        assert!(matches!(
            loss_softmax(&[0.0, 1.0], 2),
            Err(FtlError::LabelOutOfRange { label: 2, n_classes: 2 })
        ));
    }

    #[test]
    fn ml2_examples() {
        let w = Matrix::identity(2);
        assert_eq!(loss_ml2(&w, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(loss_ml2(&w, &[1.0, 1.0]).unwrap(), 2.0);
        assert!(loss_ml2(&w, &[1.0]).is_err());
    }
}
