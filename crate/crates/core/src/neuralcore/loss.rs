use super::NeuralError;
use crate::Real;

/// Numerically stable softmax.
pub fn softmax(logits: &[Real]) -> Vec<Real> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Returns `ln sum exp(row)` after overwriting `row` with softmax(row).
#[inline]
pub(crate) fn softmax_in_place(row: &mut [Real]) -> Real {
    let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|v| *v *= inv);
    max + sum.ln()
}

/// Cross-entropy of one row, in place: `row` becomes `scale * (softmax - onehot)`.
/// Returns the negative log probability of `target`.
#[inline]
pub(crate) fn xent_row_in_place(row: &mut [Real], target: usize, scale: Real) -> Real {
    let logit = row[target];
    let lse = softmax_in_place(row);
    row[target] -= 1.0;
    if scale != 1.0 {
        row.iter_mut().for_each(|v| *v *= scale);
    }
    lse - logit
}

/// Negative log-likelihood of `target` under softmax(`logits`) and its gradient
/// `softmax - onehot`.
pub fn softmax_xent(logits: &[Real], target: usize) -> Result<(Real, Vec<Real>), NeuralError> {
    if target >= logits.len() {
        return Err(NeuralError::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let mut d = logits.to_vec();
    let nll = xent_row_in_place(&mut d, target, 1.0);
    Ok((nll, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_v() {
        for target in 0..4 {
            let (nll, _) = softmax_xent(&[0.3; 4], target).unwrap();
            assert!((nll - (4.0 as Real).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logit_is_stable() {
        let (nll, d) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!(nll.is_finite() && nll.abs() < 1e-12);
        assert!(d.iter().all(|x| x.is_finite()));
        let (nll, _) = softmax_xent(&[1000.0, 0.0], 1).unwrap();
        assert!((nll - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn target_out_of_range() {
        assert_eq!(
            softmax_xent(&[0.0, 1.0], 2).unwrap_err(),
            NeuralError::TargetOutOfRange { target: 2, classes: 2 }
        );
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[-3.0, 0.5, 7.25, 2.0, -100.0]);
        let s: Real = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
