//! Labeled pools, pairwise comparison data and the pointwise sets derived
//! from it.

mod density;
mod gaussian;
mod generate;

pub use density::{discrete_density_check, DensityReport};
pub use gaussian::{make_gaussian_task, normal_cdf, GaussianTask};
pub use generate::{
    decompose_pairs, draw_labeled, generate_pairs_rejection, generate_pairs_swap,
    generate_pointwise_direct, generate_sets, sample_accept_fraction, GenerationMode,
    RejectionOutput,
};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    #[inline]
    pub fn flip(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Decision rule: a score of exactly zero is predicted positive.
    #[inline]
    pub fn from_score(score: f64) -> Label {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Label> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

/// One accepted comparison: `first` is at least as likely to be positive as
/// `second`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcompPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Ground-truth labels, kept for diagnostics only.
    pub latent_labels: Option<(Label, Label)>,
}

/// The two noisy pointwise sets obtained by splitting comparison pairs.
///
/// `noisy_pos[i]` and `noisy_neg[i]` come from the same pair. Latent labels
/// are carried for diagnostics; training code only sees the features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointwiseSets {
    pub noisy_pos: Vec<Vec<f64>>,
    pub noisy_neg: Vec<Vec<f64>>,
    pub latent_pos: Option<Vec<Label>>,
    pub latent_neg: Option<Vec<Label>>,
}

impl PointwiseSets {
    pub fn len(&self) -> usize {
        self.noisy_pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_pos.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.noisy_pos.first().map(Vec::len)
    }

    /// The first `k` pairs' worth of both sets.
    pub fn prefix(&self, k: usize) -> PointwiseSets {
        let k = k.min(self.len());
        PointwiseSets {
            noisy_pos: self.noisy_pos[..k].to_vec(),
            noisy_neg: self.noisy_neg[..k].to_vec(),
            latent_pos: self.latent_pos.as_ref().map(|v| v[..k].to_vec()),
            latent_neg: self.latent_neg.as_ref().map(|v| v[..k].to_vec()),
        }
    }

    /// Same data with the ground-truth labels removed.
    pub fn without_latent(&self) -> PointwiseSets {
        PointwiseSets {
            noisy_pos: self.noisy_pos.clone(),
            noisy_neg: self.noisy_neg.clone(),
            latent_pos: None,
            latent_neg: None,
        }
    }

    /// Fraction of true positives in the noisy-positive set, if labels are known.
    pub fn true_positive_fraction_pos(&self) -> Option<f64> {
        self.latent_pos.as_deref().map(positive_fraction)
    }

    /// Fraction of true positives in the noisy-negative set, if labels are known.
    pub fn true_positive_fraction_neg(&self) -> Option<f64> {
        self.latent_neg.as_deref().map(positive_fraction)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("pointwise sets are empty".into()));
        }
        crate::error::check_same_len(self.noisy_pos.len(), self.noisy_neg.len())?;
        let dim = self.noisy_pos[0].len();
        for x in self.noisy_pos.iter().chain(&self.noisy_neg) {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }
}

fn positive_fraction(labels: &[Label]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64
}

/// A source of feature vectors conditioned on the true label.
pub trait LabelSampler: Send + Sync {
    fn dim(&self) -> usize;

    fn sample(&self, label: Label, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Draws uniformly, with replacement, from per-class pools of real examples.
#[derive(Debug, Clone)]
pub struct PoolSampler {
    dim: usize,
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
}

impl PoolSampler {
    pub fn new(pool: &[Example]) -> Result<Self> {
        let dim = pool
            .first()
            .map(|e| e.features.len())
            .ok_or_else(|| Error::Sampler("empty pool".into()))?;
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for e in pool {
            if e.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.features.len(),
                });
            }
            match e.label {
                Label::Positive => positives.push(e.features.clone()),
                Label::Negative => negatives.push(e.features.clone()),
            }
        }
        Ok(Self {
            dim,
            positives,
            negatives,
        })
    }

    pub fn class_counts(&self) -> (usize, usize) {
        (self.positives.len(), self.negatives.len())
    }
}

impl LabelSampler for PoolSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, label: Label, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let pool = match label {
            Label::Positive => &self.positives,
            Label::Negative => &self.negatives,
        };
        if pool.is_empty() {
            return Err(Error::Sampler(format!(
                "no examples with label {}",
                label.as_i8()
            )));
        }
        Ok(pool[rng.random_range(0..pool.len())].clone())
    }
}
