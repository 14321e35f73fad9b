//! Cross-entropy of per-point contact-class predictions.

use crate::contact::labels::CONTACT_CLASSES;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default weight of the contact-region loss.
pub const CRR_WEIGHT: f64 = 0.006;

/// `(eps0 / T) * sum_t sum_i -log p_t,i[truth_t,i]`, the one-hot cross-entropy
/// summed over points and averaged over the `T` frames.
///
/// `predicted[t][i]` is a 15-way distribution and `truth[t][i]` a class in
/// 1..=15. Probabilities must be non-negative and sum to one within 1e-6; a
/// zero is accepted except at the true class.
pub fn crr_cross_entropy<T: Real>(predicted: &[Vec<Vec<T>>], truth: &[Vec<u8>], eps0: T) -> Result<T> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::invalid("prediction and truth sequences must be non-empty and aligned"));
    }
    let mut total = T::zero();
    for (t, (frame, labels)) in predicted.iter().zip(truth).enumerate() {
        if frame.len() != labels.len() {
            return Err(Error::invalid(format!("frame {t}: {} predictions for {} labels", frame.len(), labels.len())));
        }
        for (i, (p, &label)) in frame.iter().zip(labels).enumerate() {
            if p.len() != CONTACT_CLASSES {
                return Err(Error::invalid(format!("frame {t} point {i}: expected {CONTACT_CLASSES} classes")));
            }
            if label == 0 || label as usize > CONTACT_CLASSES {
                return Err(Error::invalid(format!("frame {t} point {i}: class {label} out of range")));
            }
            if !p.iter().all(|&v| v >= T::zero() && v.is_finite()) {
                return Err(Error::invalid(format!("frame {t} point {i}: negative or non-finite probability")));
            }
            let sum: T = p.iter().copied().sum();
            if (sum - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::invalid(format!("frame {t} point {i}: probabilities sum to {sum}")));
            }
            let q = p[label as usize - 1];
            if !(q > T::zero()) {
                return Err(Error::invalid(format!("frame {t} point {i}: zero probability on the true class")));
            }
            total = total - q.ln();
        }
    }
    let frames = T::from_usize(predicted.len()).expect("frame count fits scalar");
    Ok(eps0 * total / frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_closed_form() {
        let p = vec![vec![vec![1.0 / 15.0; 15]]];
        let l = crr_cross_entropy(&p, &[vec![4]], CRR_WEIGHT).unwrap();
        assert!((l - 0.006 * 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_on_truth_is_zero() {
        let mut p = vec![0.0; 15];
        p[14] = 1.0;
        assert_eq!(crr_cross_entropy(&[vec![p]], &[vec![15]], CRR_WEIGHT).unwrap(), 0.0);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        let mut p = vec![1.0 / 15.0; 15];
        p[0] = -p[0];
        assert!(crr_cross_entropy(&[vec![p]], &[vec![2]], CRR_WEIGHT).is_err());
        let mut z = vec![0.0; 15];
        z[1] = 1.0;
        assert!(crr_cross_entropy(&[vec![z.clone()]], &[vec![1]], CRR_WEIGHT).is_err());
        assert!(crr_cross_entropy(&[vec![z.clone()]], &[vec![]], CRR_WEIGHT).is_err());
        assert!(crr_cross_entropy(&[vec![vec![0.5, 0.5]]], &[vec![1]], CRR_WEIGHT).is_err());
        assert!(crr_cross_entropy::<f64>(&[], &[], CRR_WEIGHT).is_err());
    }
}
