use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{Label, LabelSampler};
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::prior::ClassPrior;
use crate::rng::{stream_rng, Stream};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two isotropic Gaussian classes with a known Bayes-optimal accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTask {
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub sigma: f64,
    pub prior: ClassPrior,
    pub bayes_accuracy: f64,
}

/// Builds a task whose class means sit at `+-separation/2` along a random
/// unit direction drawn from `seed`. Classes have unit variance.
pub fn make_gaussian_task(
    dims: usize,
    separation: f64,
    prior: ClassPrior,
    seed: u64,
) -> Result<GaussianTask> {
    if dims == 0 {
        return Err(Error::InvalidArgument("dims must be at least 1".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation must be a finite non-negative number, got {separation}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::TaskLayout);
    let direction = loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            break v.into_iter().map(|a| a / norm).collect::<Vec<_>>();
        }
    };
    let half = separation / 2.0;
    let sigma = 1.0;
    Ok(GaussianTask {
        mu_plus: direction.iter().map(|u| half * u).collect(),
        mu_minus: direction.iter().map(|u| -half * u).collect(),
        sigma,
        prior,
        bayes_accuracy: bayes_accuracy(separation / sigma, prior),
    })
}

/// Accuracy of the Bayes rule for two Gaussians whose means are `delta`
/// standard deviations apart.
fn bayes_accuracy(delta: f64, prior: ClassPrior) -> f64 {
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());
    if delta == 0.0 {
        return pp.max(pm);
    }
    // Along the mean direction, predict positive iff t > c.
    let c = (pm / pp).ln() / delta;
    pp * normal_cdf(delta / 2.0 - c) + pm * normal_cdf(c + delta / 2.0)
}

impl GaussianTask {
    pub fn dims(&self) -> usize {
        self.mu_plus.len()
    }

    pub fn separation(&self) -> f64 {
        self.mu_plus
            .iter()
            .zip(&self.mu_minus)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Same class-conditionals under a different prior.
    pub fn with_prior(&self, prior: ClassPrior) -> GaussianTask {
        GaussianTask {
            prior,
            bayes_accuracy: bayes_accuracy(self.separation() / self.sigma, prior),
            ..self.clone()
        }
    }

    /// Linear scorer equal to the posterior log-odds; its sign is the Bayes rule.
    pub fn bayes_model(&self) -> LinearModel {
        let s2 = self.sigma * self.sigma;
        let weights: Vec<f64> = self
            .mu_plus
            .iter()
            .zip(&self.mu_minus)
            .map(|(p, m)| (p - m) / s2)
            .collect();
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let bias = -(sq(&self.mu_plus) - sq(&self.mu_minus)) / (2.0 * s2)
            + (self.prior.pi_plus() / self.prior.pi_minus()).ln();
        LinearModel::from_parts(weights, bias)
    }
}

impl LabelSampler for GaussianTask {
    fn dim(&self) -> usize {
        self.dims()
    }

    fn sample(&self, label: Label, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let mean = match label {
            Label::Positive => &self.mu_plus,
            Label::Negative => &self.mu_minus,
        };
        Ok(mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                m + self.sigma * z
            })
            .collect())
    }
}
