//! Multi-seed experiments, fraction sweeps and the unbiasedness check.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    draw_labeled, generate_sets, Example, GaussianTask, GenerationMode, Label, LabelSampler,
    PointwiseSets, PoolSampler,
};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorKind, EstimatorSpec};
use crate::loss::{Logistic, MarginLoss};
use crate::model::{ModelSpec, ScoreModel};
use crate::prior::ClassPrior;
use crate::rng::{replicate_seed, stream_rng, Stream};
use crate::train::{train, SelectionSchedule, TrainConfig, TrainHistory};

/// Largest clean test set drawn for a synthetic task.
pub const MAX_TEST_SIZE: usize = 100_000;

/// Fraction of examples whose predicted sign matches the label; a score of
/// exactly zero predicts the positive class.
pub fn accuracy<M: ScoreModel>(model: &M, test: &[Example]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut correct = 0usize;
    for e in test {
        if Label::from_score(model.score(&e.features)?) == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    (mean, var.sqrt())
}

/// A labeled source for training pairs plus its clean test set.
#[derive(Debug, Clone)]
pub enum ExperimentTask {
    Gaussian(GaussianTask),
    Pool {
        sampler: PoolSampler,
        prior: ClassPrior,
        test: Vec<Example>,
    },
}

impl ExperimentTask {
    /// A task that resamples pairs from a labeled pool and tests on `test`.
    pub fn pool(train: &[Example], test: Vec<Example>, prior: ClassPrior) -> Result<Self> {
        let sampler = PoolSampler::new(train)?;
        if test.is_empty() {
            return Err(Error::InvalidArgument("empty test set".into()));
        }
        if let Some(e) = test.iter().find(|e| e.features.len() != sampler.dim()) {
            return Err(Error::DimensionMismatch {
                expected: sampler.dim(),
                got: e.features.len(),
            });
        }
        Ok(ExperimentTask::Pool {
            sampler,
            prior,
            test,
        })
    }

    pub fn prior(&self) -> ClassPrior {
        match self {
            ExperimentTask::Gaussian(t) => t.prior,
            ExperimentTask::Pool { prior, .. } => *prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.sampler().dim()
    }

    pub fn sampler(&self) -> &dyn LabelSampler {
        match self {
            ExperimentTask::Gaussian(t) => t,
            ExperimentTask::Pool { sampler, .. } => sampler,
        }
    }

    /// Training sets for one seed; depends only on the task, `n` and `seed`.
    pub fn training_sets(
        &self,
        n: usize,
        mode: GenerationMode,
        seed: u64,
    ) -> Result<PointwiseSets> {
        generate_sets(self.sampler(), self.prior(), n, mode, seed)
    }

    /// Clean test set: the supplied one for pools, otherwise
    /// `min(10 n, 100000)` fresh draws.
    pub fn test_set(&self, n_pairs: usize, seed: u64) -> Result<Vec<Example>> {
        match self {
            ExperimentTask::Pool { test, .. } => Ok(test.clone()),
            ExperimentTask::Gaussian(t) => {
                let size = (10 * n_pairs).clamp(1, MAX_TEST_SIZE);
                let mut rng = stream_rng(seed, Stream::TestData);
                (0..size)
                    .map(|_| draw_labeled(t, t.prior, &mut rng))
                    .collect()
            }
        }
    }
}

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub ramp_up_fraction: f64,
    pub evaluate_teacher: bool,
    pub mode: GenerationMode,
    /// Seed of the held-out test set.
    pub test_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Linear,
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            ramp_up_fraction: 0.1,
            evaluate_teacher: true,
            mode: GenerationMode::Rejection,
            test_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self, estimator: EstimatorSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed,
            estimator,
            selection_schedule: SelectionSchedule::PerEpoch,
            ramp_up_fraction: self.ramp_up_fraction,
            evaluate_teacher: self.evaluate_teacher,
        }
    }
}

/// Per-seed accuracies of one method and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: String,
    pub kind: EstimatorKind,
    pub prior: f64,
    pub n_pairs: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection_schedule: Option<SelectionSchedule>,
    /// Digest of the training sets of each seed.
    pub data_digests: Vec<u64>,
    #[serde(skip)]
    pub histories: Vec<TrainHistory>,
}

impl TrialReport {
    /// Whether `mean` and `std` agree with the per-seed accuracies.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let (mean, std) = mean_std(&self.accuracies);
        (mean - self.mean).abs() <= tol && (std - self.std).abs() <= tol
    }
}

/// Order-sensitive digest of the feature bits of both noisy sets.
pub fn dataset_digest(data: &PointwiseSets) -> u64 {
    let mut h = DefaultHasher::new();
    for x in data.noisy_pos.iter().chain(&data.noisy_neg) {
        for v in x {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

struct RunOutcome {
    accuracy: f64,
    history: TrainHistory,
}

fn train_and_evaluate(
    data: &PointwiseSets,
    dim: usize,
    test: &[Example],
    spec: EstimatorSpec,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<RunOutcome> {
    let model = config.model.build(dim, seed)?;
    let (model, history) = train(data, model, &config.train_config(spec, seed))?;
    Ok(RunOutcome {
        accuracy: accuracy(&model, test)?,
        history,
    })
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one seed is required".into(),
        ));
    }
    Ok(())
}

/// Trains every method on every seed's data and reports test accuracy.
pub fn run_experiment(
    task: &ExperimentTask,
    methods: &[EstimatorSpec],
    n_pairs: usize,
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<Vec<TrialReport>> {
    check_seeds(seeds)?;
    let test = task.test_set(n_pairs, config.test_seed)?;
    let datasets = seeds
        .par_iter()
        .map(|&s| task.training_sets(n_pairs, config.mode, s))
        .collect::<Result<Vec<_>>>()?;
    evaluate_grid(task, methods, seeds, &datasets, &test, config)
}

fn evaluate_grid(
    task: &ExperimentTask,
    methods: &[EstimatorSpec],
    seeds: &[u64],
    datasets: &[PointwiseSets],
    test: &[Example],
    config: &ExperimentConfig,
) -> Result<Vec<TrialReport>> {
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..seeds.len()).map(move |s| (m, s)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(m, s)| {
            train_and_evaluate(&datasets[s], task.dim(), test, methods[m], seeds[s], config)
        })
        .collect::<Result<Vec<_>>>()?;
    let digests: Vec<u64> = datasets.iter().map(dataset_digest).collect();
    let mut outcomes = outcomes.into_iter();
    Ok(methods
        .iter()
        .map(|spec| {
            let runs: Vec<RunOutcome> = outcomes.by_ref().take(seeds.len()).collect();
            let accuracies: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&accuracies);
            TrialReport {
                method: spec.method_name().to_string(),
                kind: spec.kind,
                prior: spec.prior.pi_plus(),
                n_pairs: datasets[0].len(),
                seeds: seeds.to_vec(),
                accuracies,
                mean,
                std,
                selection_schedule: spec
                    .kind
                    .uses_selection()
                    .then_some(SelectionSchedule::PerEpoch),
                data_digests: digests.clone(),
                histories: runs.into_iter().map(|r| r.history).collect(),
            }
        })
        .collect())
}

/// One row of a fraction sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub method: String,
    pub prior: f64,
    /// Pairs actually used for training.
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

/// Number of leading pairs used for a given fraction.
pub fn fraction_size(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let raw = fraction * n as f64;
    if raw < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} pairs leaves no training data"
        )));
    }
    // Slack keeps e.g. 0.1 * 2000 from rounding up to 201.
    Ok(((raw - 1e-9).ceil() as usize).clamp(1, n))
}

/// Trains on growing prefixes of each seed's generated pairs.
pub fn fraction_sweep(
    task: &ExperimentTask,
    method: EstimatorSpec,
    n_pairs: usize,
    fractions: &[f64],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<Vec<SweepRow>> {
    check_seeds(seeds)?;
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions given".into()));
    }
    if fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "fractions must be sorted ascending".into(),
        ));
    }
    let sizes = fractions
        .iter()
        .map(|&f| fraction_size(f, n_pairs))
        .collect::<Result<Vec<_>>>()?;
    let test = task.test_set(n_pairs, config.test_seed)?;
    let full = seeds
        .par_iter()
        .map(|&s| task.training_sets(n_pairs, config.mode, s))
        .collect::<Result<Vec<_>>>()?;
    fractions
        .iter()
        .zip(sizes)
        .map(|(&fraction, k)| {
            let prefixes: Vec<PointwiseSets> = full.iter().map(|d| d.prefix(k)).collect();
            let report = evaluate_grid(task, &[method], seeds, &prefixes, &test, config)?.remove(0);
            Ok(SweepRow {
                fraction,
                method: report.method,
                prior: report.prior,
                n: k,
                mean: report.mean,
                std: report.std,
                accuracies: report.accuracies,
            })
        })
        .collect()
}

/// Running mean and variance (Welford).
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn sample_variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }
}

/// Monte-Carlo estimate of the classification risk with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// True risk `pi_plus E+[l(f,+1)] + pi_minus E-[l(f,-1)]` estimated from
/// `samples` draws split between the classes in proportion to the prior.
pub fn true_risk_oracle<M: ScoreModel, S: LabelSampler + ?Sized>(
    model: &M,
    sampler: &S,
    prior: ClassPrior,
    samples: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    let n_pos = ((prior.pi_plus() * samples as f64).round() as usize)
        .clamp(1, samples.saturating_sub(1).max(1));
    let n_neg = samples.saturating_sub(n_pos).max(1);
    let loss = Logistic;
    let mut rng = stream_rng(seed, Stream::Oracle);
    let mut class_moments = |label: Label, count: usize| -> Result<(f64, f64)> {
        let mut moments = Moments::default();
        for _ in 0..count {
            let x = sampler.sample(label, &mut rng)?;
            moments.push(loss.value(model.score(&x)?, label));
        }
        let (mean, var) = (moments.mean, moments.sample_variance());
        Ok((mean, var / count as f64))
    };
    let (mean_pos, var_pos) = class_moments(Label::Positive, n_pos)?;
    let (mean_neg, var_neg) = class_moments(Label::Negative, n_neg)?;
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());
    Ok(RiskEstimate {
        value: pp * mean_pos + pm * mean_neg,
        std_error: (pp * pp * var_pos + pm * pm * var_neg).sqrt(),
    })
}

/// Replicate mean of an empirical risk next to the true-risk oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub replicates: usize,
    pub mean: f64,
    pub std_error: f64,
    pub oracle: RiskEstimate,
}

impl UnbiasednessReport {
    /// Distance between replicate mean and oracle in combined standard errors.
    pub fn z_score(&self) -> f64 {
        let se = self.std_error.hypot(self.oracle.std_error);
        let diff = (self.mean - self.oracle.value).abs();
        if diff <= 1e-12 {
            0.0
        } else {
            diff / se
        }
    }

    /// Whether the two agree within `k` combined standard errors; differences
    /// at rounding level always agree.
    pub fn agrees_within(&self, k: f64) -> bool {
        self.z_score() <= k
    }
}

pub const ORACLE_SAMPLES: usize = 1_000_000;

/// Regenerates `replicates` training sets of `n` pairs, evaluates the
/// estimator on the fixed model each time, and compares the mean with a
/// Monte-Carlo estimate of the true risk.
pub fn unbiasedness_diagnostic<M: ScoreModel, S: LabelSampler + ?Sized>(
    sampler: &S,
    prior: ClassPrior,
    model: &M,
    estimator: EstimatorKind,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    if replicates < 100 {
        return Err(Error::InvalidArgument(format!(
            "at least 100 replicates are required, got {replicates}"
        )));
    }
    if estimator.uses_selection() {
        return Err(Error::InvalidArgument(format!(
            "{estimator} depends on the model during training"
        )));
    }
    let spec = EstimatorSpec::new(estimator, prior);
    let values = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_sets(
                sampler,
                prior,
                n,
                GenerationMode::Rejection,
                replicate_seed(seed, r),
            )?;
            let sp = model.scores(&data.noisy_pos)?;
            let sn = model.scores(&data.noisy_neg)?;
            Ok(spec.risk(&sp, &sn, None, &Logistic)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut moments = Moments::default();
    values.iter().for_each(|&v| moments.push(v));
    let oracle = true_risk_oracle(model, sampler, prior, ORACLE_SAMPLES, seed)?;
    Ok(UnbiasednessReport {
        replicates,
        mean: moments.mean,
        std_error: (moments.sample_variance() / moments.count as f64).sqrt(),
        oracle,
    })
}
