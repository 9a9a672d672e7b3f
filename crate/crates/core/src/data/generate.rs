use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Example, Label, LabelSampler, PcompPair, PointwiseSets};
use crate::error::{Error, Result};
use crate::prior::ClassPrior;
use crate::rng::{stream_rng, Stream};

/// How pointwise training sets are produced from a labeled source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// Draw ordered pairs and discard every `(-1, +1)` pair.
    #[default]
    Rejection,
    /// Draw each noisy set directly from its two-component mixture.
    Pointwise,
    /// Keep `(-1, +1)` pairs by swapping them into `(+1, -1)`.
    ///
    /// This doubles the weight of mixed pairs and therefore shifts the
    /// noisy-set mixtures away from the ones the estimators assume.
    Swap,
}

impl std::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rejection" => Ok(GenerationMode::Rejection),
            "pointwise" => Ok(GenerationMode::Pointwise),
            "swap" => Ok(GenerationMode::Swap),
            other => Err(Error::InvalidArgument(format!(
                "unknown generation mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RejectionOutput {
    pub pairs: Vec<PcompPair>,
    /// Candidate pairs drawn, accepted or not.
    pub candidates: usize,
    /// `pairs.len() / candidates`.
    pub accept_fraction: f64,
}

#[inline]
fn draw_label(prior: ClassPrior, rng: &mut dyn RngCore) -> Label {
    if rng.random::<f64>() < prior.pi_plus() {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// One draw from `p(x, y)`.
pub fn draw_labeled<S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    rng: &mut dyn RngCore,
) -> Result<Example> {
    let label = draw_label(prior, rng);
    Ok(Example::new(sampler.sample(label, rng)?, label))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "number of pairs must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Draws ordered candidate pairs from `p(x, y) p(x', y')` until `n` of them
/// have admissible labels, i.e. anything but `(-1, +1)`.
///
/// Labels are drawn before features; a rejected candidate's features would
/// be discarded anyway, so they are never sampled.
pub fn generate_pairs_rejection<S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    n: usize,
    seed: u64,
) -> Result<RejectionOutput> {
    check_n(n)?;
    let mut rng = stream_rng(seed, Stream::TrainData);
    let mut pairs = Vec::with_capacity(n);
    let mut candidates = 0usize;
    while pairs.len() < n {
        candidates += 1;
        let y = draw_label(prior, &mut rng);
        let y_prime = draw_label(prior, &mut rng);
        if y == Label::Negative && y_prime == Label::Positive {
            continue;
        }
        let first = sampler.sample(y, &mut rng)?;
        let second = sampler.sample(y_prime, &mut rng)?;
        pairs.push(PcompPair {
            first,
            second,
            latent_labels: Some((y, y_prime)),
        });
    }
    Ok(RejectionOutput {
        accept_fraction: n as f64 / candidates as f64,
        pairs,
        candidates,
    })
}

/// Acceptance fraction over exactly `candidates` label pairs.
pub fn sample_accept_fraction(prior: ClassPrior, candidates: usize, seed: u64) -> Result<f64> {
    check_n(candidates)?;
    let mut rng = stream_rng(seed, Stream::TrainData);
    let accepted = (0..candidates)
        .filter(|_| {
            let y = draw_label(prior, &mut rng);
            let y_prime = draw_label(prior, &mut rng);
            !(y == Label::Negative && y_prime == Label::Positive)
        })
        .count();
    Ok(accepted as f64 / candidates as f64)
}

/// Variant that keeps every candidate, swapping `(-1, +1)` pairs.
pub fn generate_pairs_swap<S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    n: usize,
    seed: u64,
) -> Result<Vec<PcompPair>> {
    check_n(n)?;
    let mut rng = stream_rng(seed, Stream::TrainData);
    (0..n)
        .map(|_| {
            let mut y = draw_label(prior, &mut rng);
            let mut y_prime = draw_label(prior, &mut rng);
            let mut first = sampler.sample(y, &mut rng)?;
            let mut second = sampler.sample(y_prime, &mut rng)?;
            if y == Label::Negative && y_prime == Label::Positive {
                std::mem::swap(&mut first, &mut second);
                std::mem::swap(&mut y, &mut y_prime);
            }
            Ok(PcompPair {
                first,
                second,
                latent_labels: Some((y, y_prime)),
            })
        })
        .collect()
}

/// Splits pairs into first elements (tagged `+1`) and second elements
/// (tagged `-1`), preserving order.
pub fn decompose_pairs(pairs: &[PcompPair]) -> PointwiseSets {
    let latent = pairs.iter().all(|p| p.latent_labels.is_some()) && !pairs.is_empty();
    let (latent_pos, latent_neg) = if latent {
        let (a, b) = pairs.iter().filter_map(|p| p.latent_labels).unzip();
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    PointwiseSets {
        noisy_pos: pairs.iter().map(|p| p.first.clone()).collect(),
        noisy_neg: pairs.iter().map(|p| p.second.clone()).collect(),
        latent_pos,
        latent_neg,
    }
}

/// Draws both noisy sets directly from their mixtures: the first with
/// true-positive probability `pi_plus / pi_tilde`, the second with
/// `pi_plus^2 / pi_tilde`.
pub fn generate_pointwise_direct<S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    n: usize,
    seed: u64,
) -> Result<PointwiseSets> {
    check_n(n)?;
    let weights = prior.mixture_weights();
    let mut rng = stream_rng(seed, Stream::TrainData);
    let mut draw_set = |p_true_pos: f64| -> Result<(Vec<Vec<f64>>, Vec<Label>)> {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let y = if rng.random::<f64>() < p_true_pos {
                Label::Positive
            } else {
                Label::Negative
            };
            xs.push(sampler.sample(y, &mut rng)?);
            ys.push(y);
        }
        Ok((xs, ys))
    };
    let (noisy_pos, latent_pos) = draw_set(weights.pos_set_true_pos)?;
    let (noisy_neg, latent_neg) = draw_set(weights.neg_set_true_pos)?;
    Ok(PointwiseSets {
        noisy_pos,
        noisy_neg,
        latent_pos: Some(latent_pos),
        latent_neg: Some(latent_neg),
    })
}

/// Pointwise training sets of `n` pairs under the chosen mode.
pub fn generate_sets<S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    n: usize,
    mode: GenerationMode,
    seed: u64,
) -> Result<PointwiseSets> {
    match mode {
        GenerationMode::Rejection => Ok(decompose_pairs(
            &generate_pairs_rejection(sampler, prior, n, seed)?.pairs,
        )),
        GenerationMode::Pointwise => generate_pointwise_direct(sampler, prior, n, seed),
        GenerationMode::Swap => Ok(decompose_pairs(&generate_pairs_swap(
            sampler, prior, n, seed,
        )?)),
    }
}
