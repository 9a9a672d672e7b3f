//! Class priors and the noise quantities induced by the pairwise
//! comparison generation process.
//!
//! Every pair is drawn from `p(x, y) p(x', y')` and kept unless its labels
//! are `(-1, +1)`, so a fraction `pi_tilde = 1 - pi_plus * pi_minus` of
//! candidate pairs survives. Splitting the surviving pairs into their first
//! and second elements gives two noisy pointwise sets whose contamination
//! rates follow in closed form from `pi_plus`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack below 3/4 tolerated by [`estimate_pi_plus`] before an acceptance
/// fraction is rejected as inconsistent.
pub const ACCEPT_FRACTION_CLAMP: f64 = 1e-9;

/// Positive class prior `pi_plus = p(y = +1)`.
///
/// Only `pi_plus` is stored; `pi_minus` and `pi_tilde` are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ClassPrior {
    pi_plus: f64,
}

impl ClassPrior {
    pub fn new(pi_plus: f64) -> Result<Self> {
        if !(pi_plus > 0.0 && pi_plus < 1.0) {
            return Err(Error::InvalidPrior(pi_plus));
        }
        Ok(Self { pi_plus })
    }

    #[inline]
    pub fn pi_plus(&self) -> f64 {
        self.pi_plus
    }

    #[inline]
    pub fn pi_minus(&self) -> f64 {
        1.0 - self.pi_plus
    }

    /// Probability that an ordered pair of labels is admissible, i.e. not
    /// `(-1, +1)`: `pi_plus^2 + pi_minus^2 + pi_plus * pi_minus`.
    #[inline]
    pub fn pi_tilde(&self) -> f64 {
        1.0 - self.pi_plus * self.pi_minus()
    }

    /// Whether the positive class is the strict minority.
    pub fn positive_is_minority(&self) -> bool {
        self.pi_plus < self.pi_minus()
    }

    pub fn noise_rates(&self) -> NoiseRates {
        noise_rates_from_prior(*self)
    }

    pub fn mixture_weights(&self) -> MixtureWeights {
        mixture_weights(*self)
    }
}

impl TryFrom<f64> for ClassPrior {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        ClassPrior::new(value)
    }
}

impl From<ClassPrior> for f64 {
    fn from(prior: ClassPrior) -> f64 {
        prior.pi_plus
    }
}

/// Label noise seen when the first element of each pair is tagged `+1` and
/// the second `-1`.
///
/// `rho_plus = P(tag = -1 | y = +1)`, `rho_minus = P(tag = +1 | y = -1)`,
/// `phi_plus = P(y = -1 | tag = +1)`, `phi_minus = P(y = +1 | tag = -1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
}

impl NoiseRates {
    /// Noise-free rates (all zero).
    pub fn clean() -> Self {
        Self {
            rho_plus: 0.0,
            rho_minus: 0.0,
            phi_plus: 0.0,
            phi_minus: 0.0,
        }
    }
}

/// Component weights of the two noisy pointwise densities.
///
/// The first-element density is `pos_set_true_pos * p_plus + pos_set_true_neg * p_minus`,
/// the second-element density is `neg_set_true_pos * p_plus + neg_set_true_neg * p_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub pos_set_true_pos: f64,
    pub pos_set_true_neg: f64,
    pub neg_set_true_pos: f64,
    pub neg_set_true_neg: f64,
}

pub fn noise_rates_from_prior(prior: ClassPrior) -> NoiseRates {
    let (pp, pm, pt) = (prior.pi_plus(), prior.pi_minus(), prior.pi_tilde());
    NoiseRates {
        rho_plus: pp / (1.0 + pp),
        rho_minus: pm / (1.0 + pm),
        phi_plus: pm * pm / pt,
        phi_minus: pp * pp / pt,
    }
}

pub fn mixture_weights(prior: ClassPrior) -> MixtureWeights {
    let (pp, pm, pt) = (prior.pi_plus(), prior.pi_minus(), prior.pi_tilde());
    MixtureWeights {
        pos_set_true_pos: pp / pt,
        pos_set_true_neg: pm * pm / pt,
        neg_set_true_pos: pp * pp / pt,
        neg_set_true_neg: pm / pt,
    }
}

/// Recovers `pi_plus` from the fraction of admissible candidate pairs.
///
/// The fraction identifies `pi_plus * pi_minus` but not which class is the
/// minority, so the caller has to say. Returns a value in `[0, 1]`; the
/// endpoints are reachable at `accept_fraction = 1`.
pub fn estimate_pi_plus(accept_fraction: f64, positive_is_minority: bool) -> Result<f64> {
    if !(0.75 - ACCEPT_FRACTION_CLAMP..=1.0).contains(&accept_fraction) {
        return Err(Error::InvalidAcceptFraction(accept_fraction));
    }
    let root = (accept_fraction - 0.75).max(0.0).sqrt();
    Ok(if positive_is_minority {
        0.5 - root
    } else {
        0.5 + root
    })
}

/// Like [`estimate_pi_plus`] but requires a non-degenerate prior.
pub fn estimate_prior(accept_fraction: f64, positive_is_minority: bool) -> Result<ClassPrior> {
    ClassPrior::new(estimate_pi_plus(accept_fraction, positive_is_minority)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> impl Iterator<Item = ClassPrior> {
        (1..=19).map(|k| ClassPrior::new(k as f64 * 0.05).unwrap())
    }

    #[test]
    fn rejects_degenerate_priors() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(ClassPrior::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn symmetric_prior_makes_all_rates_one_third() {
        let r = noise_rates_from_prior(ClassPrior::new(0.5).unwrap());
        for v in [r.rho_plus, r.rho_minus, r.phi_plus, r.phi_minus] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rates_at_skewed_priors() {
        let r = noise_rates_from_prior(ClassPrior::new(0.2).unwrap());
        assert!((r.rho_plus - 0.2 / 1.2).abs() < 1e-12);
        assert!((r.rho_minus - 0.8 / 1.8).abs() < 1e-12);
        assert!((r.phi_plus - 0.64 / 0.84).abs() < 1e-12);
        assert!((r.phi_minus - 0.04 / 0.84).abs() < 1e-12);
        assert!((r.rho_plus - 0.166667).abs() < 1e-6);
        assert!((r.rho_minus - 0.444444).abs() < 1e-6);
        assert!((r.phi_plus - 0.761905).abs() < 1e-6);
        assert!((r.phi_minus - 0.047619).abs() < 1e-6);

        let m = noise_rates_from_prior(ClassPrior::new(0.8).unwrap());
        assert!((m.rho_plus - r.rho_minus).abs() < 1e-12);
        assert!((m.rho_minus - r.rho_plus).abs() < 1e-12);
        assert!((m.phi_plus - r.phi_minus).abs() < 1e-12);
        assert!((m.phi_minus - r.phi_plus).abs() < 1e-12);
    }

    #[test]
    fn mixture_weights_examples() {
        let w = mixture_weights(ClassPrior::new(0.2).unwrap());
        assert!((w.pos_set_true_pos - 0.238095).abs() < 1e-6);
        assert!((w.pos_set_true_neg - 0.761905).abs() < 1e-6);
        assert!((w.neg_set_true_pos - 0.047619).abs() < 1e-6);
        assert!((w.neg_set_true_neg - 0.952381).abs() < 1e-6);

        let h = mixture_weights(ClassPrior::new(0.5).unwrap());
        assert!((h.pos_set_true_pos - 2.0 / 3.0).abs() < 1e-15);
        assert!((h.pos_set_true_neg - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.neg_set_true_pos - 1.0 / 3.0).abs() < 1e-15);
        assert!((h.neg_set_true_neg - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_weights_normalized_and_match_noise_rates() {
        for prior in grid() {
            let w = prior.mixture_weights();
            let r = prior.noise_rates();
            assert!((w.pos_set_true_pos + w.pos_set_true_neg - 1.0).abs() < 1e-12);
            assert!((w.neg_set_true_pos + w.neg_set_true_neg - 1.0).abs() < 1e-12);
            assert!((w.pos_set_true_pos - (1.0 - r.phi_plus)).abs() < 1e-12);
            assert!((w.neg_set_true_neg - (1.0 - r.phi_minus)).abs() < 1e-12);
            assert!(
                (r.phi_plus * prior.pi_tilde() + prior.pi_plus() - prior.pi_tilde()).abs() < 1e-12
            );
            assert!(
                (r.phi_minus * prior.pi_tilde() + prior.pi_minus() - prior.pi_tilde()).abs()
                    < 1e-12
            );
            assert!(r.rho_plus + r.rho_minus < 1.0);
            let pt = prior.pi_tilde();
            assert!((0.75..=1.0).contains(&pt));
            let direct = prior.pi_plus().powi(2)
                + prior.pi_minus().powi(2)
                + prior.pi_plus() * prior.pi_minus();
            assert!((pt - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_from_bayes_inversion_with_balanced_tags() {
        // Both observed sets have n members, so P(tag = +1) = P(tag = -1) = 1/2.
        for prior in grid() {
            let r = prior.noise_rates();
            let pos_given_neg_tag = r.phi_minus;
            let pos_given_pos_tag = 1.0 - r.phi_plus;
            let rho_plus =
                pos_given_neg_tag * 0.5 / (pos_given_neg_tag * 0.5 + pos_given_pos_tag * 0.5);
            let neg_given_pos_tag = r.phi_plus;
            let neg_given_neg_tag = 1.0 - r.phi_minus;
            let rho_minus =
                neg_given_pos_tag * 0.5 / (neg_given_pos_tag * 0.5 + neg_given_neg_tag * 0.5);
            assert!((rho_plus - r.rho_plus).abs() < 1e-12);
            assert!((rho_minus - r.rho_minus).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_prior_examples() {
        assert!((estimate_pi_plus(0.84, true).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(estimate_pi_plus(0.75, true).unwrap(), 0.5);
        assert_eq!(estimate_pi_plus(0.75, false).unwrap(), 0.5);
        assert_eq!(estimate_pi_plus(1.0, true).unwrap(), 0.0);
        assert!(estimate_prior(1.0, true).is_err());
        assert_eq!(estimate_pi_plus(0.75 - 1e-10, true).unwrap(), 0.5);
        assert!(estimate_pi_plus(0.7, true).is_err());
        assert!(estimate_pi_plus(1.01, false).is_err());
        assert!(estimate_pi_plus(f64::NAN, false).is_err());
    }

    #[test]
    fn estimate_prior_round_trip() {
        for prior in grid() {
            let back = estimate_pi_plus(prior.pi_tilde(), prior.positive_is_minority()).unwrap();
            assert!(
                (back - prior.pi_plus()).abs() < 1e-12,
                "{} -> {}",
                prior.pi_plus(),
                back
            );
        }
    }
}
