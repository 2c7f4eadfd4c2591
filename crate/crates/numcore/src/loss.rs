use crate::error::{NumError, Result};
use crate::kernels::log_sum_exp;
use crate::scalar::Scalar;

/// Output of [`label_smoothed_nll`].
#[derive(Clone, Debug)]
pub struct SmoothedNll<T> {
    /// Mean loss over non-pad positions.
    pub loss: T,
    /// Number of non-pad positions that contributed.
    pub tokens: usize,
    /// Summed plain negative log-likelihood of the targets (for perplexity).
    pub nll_sum: T,
    /// Gradient of `loss` w.r.t. the logits, same layout as the logits.
    pub grad: Option<Vec<T>>,
}

/// Label-smoothed cross entropy over `rows × vocab` logits.
///
/// Per position the loss is `(1-ε)·(-log p[target]) + ε·mean_j(-log p[j])`,
/// averaged over positions whose target is not `pad_id`.
pub fn label_smoothed_nll<T: Scalar>(
    logits: &[T],
    vocab: usize,
    targets: &[usize],
    smoothing: f64,
    pad_id: usize,
    want_grad: bool,
) -> Result<SmoothedNll<T>> {
    let rows = targets.len();
    if logits.len() != rows * vocab {
        return Err(NumError::Shape(format!(
            "logits have {} values, expected {rows}×{vocab}",
            logits.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
        return Err(NumError::TokenOutOfRange { id: bad, vocab });
    }
    let count = targets.iter().filter(|&&t| t != pad_id).count();
    if count == 0 {
        return Err(NumError::EmptyBatch);
    }
    let eps = T::of(smoothing);
    let keep = T::one() - eps;
    let inv_v = T::of(1.0 / vocab as f64);
    let inv_count = T::of(1.0 / count as f64);
    let mut total = T::zero();
    let mut nll_sum = T::zero();
    let mut grad = want_grad.then(|| vec![T::zero(); logits.len()]);
    for (r, &t) in targets.iter().enumerate() {
        if t == pad_id {
            continue;
        }
        let row = &logits[r * vocab..(r + 1) * vocab];
        let lse = log_sum_exp(row);
        let mean_logit = row.iter().copied().sum::<T>() * inv_v;
        let nll = lse - row[t];
        let uniform = lse - mean_logit;
        total += keep * nll + eps * uniform;
        nll_sum += nll;
        if let Some(g) = grad.as_mut() {
            let grow = &mut g[r * vocab..(r + 1) * vocab];
            for (j, gj) in grow.iter_mut().enumerate() {
                let p = (row[j] - lse).exp();
                *gj = (p - eps * inv_v) * inv_count;
            }
            grow[t] -= keep * inv_count;
        }
    }
    let loss = total * inv_count;
    if !loss.is_finite() {
        return Err(NumError::NonFiniteLoss);
    }
    Ok(SmoothedNll { loss, tokens: count, nll_sum, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_smoothing_is_plain_nll() {
        let logits = [0.3f64, -1.2, 2.0];
        let out = label_smoothed_nll(&logits, 3, &[2], 0.0, 99, false).unwrap();
        let lse = log_sum_exp(&logits);
        assert!((out.loss - (lse - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let v = 7;
        let logits = vec![0.25f64; v * 2];
        for eps in [0.0, 0.2, 0.9] {
            let out = label_smoothed_nll(&logits, v, &[1, 4], eps, 99, false).unwrap();
            assert!((out.loss - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_class_hand_value() {
        // 0.9·(−ln 0.9) + 0.1·(−ln 0.1)
        let logits = [0.9f64.ln(), 0.1f64.ln()];
        let out = label_smoothed_nll(&logits, 2, &[0], 0.2, 99, false).unwrap();
        let want = 0.9 * -(0.9f64.ln()) + 0.1 * -(0.1f64.ln());
        assert!((out.loss - want).abs() < 1e-12);
        assert!((out.loss - 0.3251).abs() < 1e-4);
    }

    #[test]
    fn pad_positions_are_excluded() {
        let logits = [0.0f64, 5.0, 1.0, 1.0];
        let a = label_smoothed_nll(&logits, 2, &[1, 0], 0.1, 0, false).unwrap();
        let b = label_smoothed_nll(&logits[..2], 2, &[1], 0.1, 0, false).unwrap();
        assert_eq!(a.tokens, 1);
        assert!((a.loss - b.loss).abs() < 1e-15);
    }

    #[test]
    fn all_pad_is_an_error() {
        let logits = [0.0f64; 4];
        assert_eq!(
            label_smoothed_nll(&logits, 2, &[0, 0], 0.1, 0, false).unwrap_err(),
            NumError::EmptyBatch
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits = vec![0.3f64, -0.7, 1.1, 0.05, 0.4, -2.0];
        let targets = [2, 0];
        let g = label_smoothed_nll(&logits, 3, &targets, 0.2, 99, true).unwrap().grad.unwrap();
        for i in 0..logits.len() {
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fu = label_smoothed_nll(&up, 3, &targets, 0.2, 99, false).unwrap().loss;
            let fd = label_smoothed_nll(&dn, 3, &targets, 0.2, 99, false).unwrap().loss;
            assert!(((fu - fd) / 2e-6 - g[i]).abs() < 1e-8);
        }
    }
}
