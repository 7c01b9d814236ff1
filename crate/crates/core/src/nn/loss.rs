//! Loss functions returning `(mean loss, gradient w.r.t. the prediction)`.

use alloc::vec::Vec;

use super::layers::sigmoid;

/// Mean absolute error. The subgradient at zero difference is zero.
pub fn l1_mean(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    (loss / n, grad)
}

/// Binary cross-entropy of `sigmoid(logit)` against soft `labels`, computed
/// from logits: `softplus(l) - y l`.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| {
            loss += softplus(l) - y * l;
            (sigmoid(l) - y) / n
        })
        .collect();
    (loss / n, grad)
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + libm::log1p(libm::exp(-v))
    } else {
        libm::log1p(libm::exp(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_matches_direct_formula() {
        let logits = [-3.0, -0.2, 0.0, 1.7, 12.0];
        let labels = [0.05, 0.95, 0.5, 0.0, 1.0];
        let (loss, grad) = bce_with_logits(&logits, &labels);
        let direct: f64 = logits
            .iter()
            .zip(&labels)
            .map(|(&l, &y)| {
                let p = sigmoid(l);
                -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
            })
            .sum::<f64>()
            / 5.0;
        assert!((loss - direct).abs() < 1e-9);
        let eps = 1e-6;
        for k in 0..5 {
            let mut up = logits;
            up[k] += eps;
            let mut down = logits;
            down[k] -= eps;
            let fd = (bce_with_logits(&up, &labels).0 - bce_with_logits(&down, &labels).0) / (2.0 * eps);
            assert!((fd - grad[k]).abs() < 1e-8);
        }
        // Extreme logits stay finite.
        assert!(bce_with_logits(&[800.0, -800.0], &[0.0, 1.0]).0.is_finite());
    }

    #[test]
    fn l1_examples() {
        let (loss, grad) = l1_mean(&[0.5, 0.2, 0.3], &[0.4, 0.2, 0.6]);
        assert!((loss - 0.4 / 3.0).abs() < 1e-15);
        assert_eq!(grad, [1.0 / 3.0, 0.0, -1.0 / 3.0]);
    }
}
