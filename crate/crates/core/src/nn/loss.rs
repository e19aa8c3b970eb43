/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-sample binary cross-entropy with clamped probability.
#[inline]
pub fn bce(y: u8, p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean binary cross-entropy over a batch.
pub fn bce_loss(y: &[u8], p: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), p.len());
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(p).map(|(&yi, &pi)| bce(yi, pi)).sum::<f64>() / y.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        // 1 - e^-500 is not representable; the stable branch must still
        // land on the upper bound rather than overflow to NaN.
        let hi = sigmoid(500.0);
        assert!(hi.is_finite() && hi <= 1.0 && hi >= 1.0 - f64::EPSILON);
        let lo = sigmoid(-500.0);
        assert!(lo > 0.0 && lo < 1e-200);
    }

    #[test]
    fn bce_reference_points() {
        assert!(bce_loss(&[1], &[1.0 - PROB_EPS]) < 1e-6);
        assert!((bce_loss(&[1], &[0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(&[0], &[0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
        // clamping keeps the loss finite
        assert!(bce_loss(&[1], &[0.0]).is_finite());
    }

    proptest! {
        #[test]
        fn sigmoid_symmetric_and_bounded(x in -700.0f64..700.0) {
            let s = sigmoid(x);
            prop_assert!(s >= 0.0 && s <= 1.0);
            if x.abs() < 30.0 {
                prop_assert!(s > 0.0 && s < 1.0);
            }
            prop_assert!((sigmoid(-x) - (1.0 - s)).abs() < 1e-15);
        }

        #[test]
        fn bce_nonnegative(p in 0.0f64..=1.0, y in 0u8..=1) {
            prop_assert!(bce(y, p) >= 0.0);
        }
    }
}
