use crate::error::{invalid, Result};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(invalid("softmax of an empty vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// Log-softmax computed directly as `x - max - ln Σ exp(x - max)`.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(invalid("log-softmax of an empty vector"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    Ok(logits.iter().map(|&x| x - lse).collect())
}

/// Logistic function; saturates instead of overflowing.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`].
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_reference_values() {
        // exp(k - 3) / (e^-2 + e^-1 + 1), evaluated in extended precision
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expect = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
        for (a, b) in p.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn softmax_empty_is_invalid() {
        assert!(softmax(&[]).is_err());
        assert!(log_softmax(&[]).is_err());
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid(1.0), 0.7310585786300049, epsilon = 1e-10);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn log_softmax_survives_extreme_logits() {
        let l = log_softmax(&[0.0, -1000.0]).unwrap();
        assert_abs_diff_eq!(l[1], -1000.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let p = softmax(&v).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-20.0f64..20.0, 1..20), c in -30.0f64..30.0) {
            let a = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn log_softmax_matches_log_of_softmax(v in prop::collection::vec(-20.0f64..20.0, 1..20)) {
            let a = log_softmax(&v).unwrap();
            let b = softmax(&v).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y.ln()).abs() < 1e-10);
            }
        }

        #[test]
        fn sigmoid_symmetric(x in -40.0f64..40.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn sigmoid_inverts_logit(p in 1e-9f64..(1.0 - 1e-9)) {
            prop_assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
    }
}
