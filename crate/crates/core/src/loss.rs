//! Binary margin losses `l(z, y)` with their derivative in the score `z`.

use crate::data::Label;
use crate::error::{Error, Result};

pub trait MarginLoss: Send + Sync {
    fn name(&self) -> &'static str;

    /// Loss of score `z` against label `y`.
    fn value(&self, z: f64, y: Label) -> f64;

    /// `d/dz value(z, y)`.
    fn derivative(&self, z: f64, y: Label) -> f64;
}

/// `l(z, y) = ln(1 + exp(-y z))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Logistic;

#[inline]
fn softplus(t: f64) -> f64 {
    // ln(1 + e^t) without overflow.
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl MarginLoss for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    #[inline]
    fn value(&self, z: f64, y: Label) -> f64 {
        softplus(-y.sign() * z)
    }

    #[inline]
    fn derivative(&self, z: f64, y: Label) -> f64 {
        let s = y.sign();
        -s * sigmoid(-s * z)
    }
}

fn check_finite(z: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(Error::NonFinite(z));
    }
    Ok(())
}

pub fn logistic_loss(z: f64, y: Label) -> Result<f64> {
    check_finite(z)?;
    Ok(Logistic.value(z, y))
}

pub fn logistic_grad(z: f64, y: Label) -> Result<f64> {
    check_finite(z)?;
    Ok(Logistic.derivative(z, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: Label = Label::Positive;
    const N: Label = Label::Negative;

    #[test]
    fn reference_values() {
        assert!((logistic_loss(0.0, P).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((logistic_loss(2.0, P).unwrap() - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((logistic_loss(2.0, P).unwrap() - 0.126928).abs() < 1e-6);
        assert!((logistic_loss(-1.0, N).unwrap() - 0.313262).abs() < 1e-6);
        assert_eq!(logistic_grad(0.0, P).unwrap(), -0.5);
        assert_eq!(logistic_grad(0.0, N).unwrap(), 0.5);
        assert!((logistic_grad(2.0, P).unwrap() + 0.119203).abs() < 1e-6);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(logistic_loss(f64::NAN, P).is_err());
        assert!(logistic_grad(f64::INFINITY, N).is_err());
    }

    #[test]
    fn no_overflow_at_large_scores() {
        for z in [-1e4, -800.0, 800.0, 1e4] {
            for y in [P, N] {
                let v = Logistic.value(z, y);
                let d = Logistic.derivative(z, y);
                assert!(v.is_finite() && v >= 0.0 && d.is_finite());
            }
        }
        assert!((Logistic.value(-1e4, P) - 1e4).abs() < 1e-9);
        assert_eq!(Logistic.value(1e4, P), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences_on_random_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..1000 {
            let z: f64 = rng.random_range(-10.0..10.0);
            let y = if rng.random::<bool>() { P } else { N };
            let fd = (Logistic.value(z + h, y) - Logistic.value(z - h, y)) / (2.0 * h);
            let g = Logistic.derivative(z, y);
            assert!((g - fd).abs() <= 1e-6 * (1.0 + g.abs()), "z={z}");
        }
    }

    proptest! {
        #[test]
        fn margin_symmetry_and_lipschitz(z in -50.0f64..50.0, dz in -5.0f64..5.0) {
            for y in [P, N] {
                prop_assert!((Logistic.value(z, y) - Logistic.value(-z, y.flip())).abs() < 1e-12);
                prop_assert!(Logistic.value(z, y) >= 0.0);
                let diff = (Logistic.value(z + dz, y) - Logistic.value(z, y)).abs();
                prop_assert!(diff <= dz.abs() + 1e-12);
                prop_assert!(Logistic.derivative(z, y).abs() <= 1.0);
            }
        }
    }
}
