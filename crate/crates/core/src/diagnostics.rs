//! Property suite run by `pcomp diag`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::data::{
    decompose_pairs, discrete_density_check, generate_pairs_rejection, make_gaussian_task,
    sample_accept_fraction,
};
use crate::error::Result;
use crate::estimator::{
    biased_risk, consistency_penalty, corrected_brackets, noisy_unbiased_risk, pc_corrected,
    pc_unbiased, pcomp_uu_thetas, ppc_risk, score_gradient_error, select_confident, uu_risk,
    Correction, EstimatorKind, RiskValue,
};
use crate::harness::unbiasedness_diagnostic;
use crate::loss::Logistic;
use crate::model::gradcheck::max_relative_error;
use crate::model::{LinearModel, MlpModel, ScoreModel};
use crate::prior::{estimate_pi_plus, ClassPrior};
use crate::rng::{stream_rng, Stream};

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub replicates: usize,
    pub n: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replicates: 1000,
            n: 500,
        }
    }
}

const PRIORS: [f64; 3] = [0.2, 0.5, 0.8];

fn prior(p: f64) -> ClassPrior {
    ClassPrior::new(p).expect("constant prior is valid")
}

fn normal_vec(rng: &mut dyn RngCore, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// A random linear model with standard-normal weights and bias.
pub fn random_linear_model(dim: usize, seed: u64) -> LinearModel {
    let mut rng = stream_rng(seed, Stream::Diagnostic);
    let w = normal_vec(&mut rng, dim, 1.0);
    let b = normal_vec(&mut rng, 1, 1.0)[0];
    LinearModel::from_parts(w, b)
}

/// Runs every check; an error means a check could not be evaluated at all.
pub fn run_suite(config: SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    out.extend(unbiasedness(config)?);
    out.push(uu_equivalence(config.seed));
    out.push(density_inversion(config.seed)?);
    out.push(noise_realization(config.seed)?);
    out.push(prior_recovery(config.seed)?);
    out.push(estimator_gradients(config.seed));
    out.push(model_gradients(config.seed)?);
    Ok(out)
}

fn unbiasedness(config: SuiteConfig) -> Result<Vec<CheckResult>> {
    let model = random_linear_model(1, config.seed);
    let mut out = Vec::new();
    for p in PRIORS {
        let task = make_gaussian_task(1, 3.0, prior(p), config.seed)?;
        let r = unbiasedness_diagnostic(
            &task,
            task.prior,
            &model,
            EstimatorKind::Unbiased,
            config.n,
            config.replicates,
            config.seed,
        )?;
        out.push(CheckResult::new(
            format!("unbiased estimator mean matches true risk (prior {p})"),
            r.agrees_within(3.0),
            format!(
                "mean {:.6} oracle {:.6} z {:.2}",
                r.mean,
                r.oracle.value,
                r.z_score()
            ),
        ));
    }
    let task = make_gaussian_task(1, 3.0, prior(0.2), config.seed)?;
    let r = unbiasedness_diagnostic(
        &task,
        task.prior,
        &model,
        EstimatorKind::Biased,
        config.n,
        config.replicates,
        config.seed,
    )?;
    out.push(CheckResult::new(
        "biased estimator is detected as biased (prior 0.2)",
        !r.agrees_within(3.0),
        format!(
            "mean {:.6} oracle {:.6} z {:.2}",
            r.mean,
            r.oracle.value,
            r.z_score()
        ),
    ));
    Ok(out)
}

fn uu_equivalence(seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, Stream::Diagnostic);
    let mut worst = 0.0f64;
    for p in PRIORS {
        let pr = prior(p);
        let (theta, theta_prime) = pcomp_uu_thetas(pr);
        for _ in 0..100 {
            let n = rng.random_range(1..50);
            let sp = normal_vec(&mut rng, n, 3.0);
            let sn = normal_vec(&mut rng, n, 3.0);
            let a = uu_risk(&sp, &sn, theta, theta_prime, pr, &Logistic).map(|r| r.value);
            let b = pc_unbiased(&sp, &sn, pr, &Logistic).map(|r| r.value);
            worst = worst.max(match (a, b) {
                (Ok(a), Ok(b)) => (a - b).abs(),
                _ => f64::INFINITY,
            });
        }
    }
    CheckResult::new(
        "unlabeled-unlabeled risk equals pairwise risk",
        worst <= 1e-9,
        format!("max difference {worst:.3e}"),
    )
}

fn density_inversion(seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, Stream::Diagnostic);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut draw = || {
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let (pp, pm) = (draw(), draw());
        let p = rng.random_range(0.05..0.95);
        worst = worst.max(discrete_density_check(&pp, &pm, prior(p))?.max_abs_error);
    }
    Ok(CheckResult::new(
        "class densities recovered from noisy densities",
        worst <= 1e-12,
        format!("max error {worst:.3e}"),
    ))
}

fn noise_realization(seed: u64) -> Result<CheckResult> {
    let pr = prior(0.2);
    let noise = pr.noise_rates();
    let task = make_gaussian_task(1, 3.0, pr, seed)?;
    let sets = decompose_pairs(&generate_pairs_rejection(&task, pr, 10_000, seed)?.pairs);
    let neg_in_pos = 1.0 - sets.true_positive_fraction_pos().unwrap_or(f64::NAN);
    let pos_in_neg = sets.true_positive_fraction_neg().unwrap_or(f64::NAN);
    Ok(CheckResult::new(
        "pair generation realizes the set contamination rates (prior 0.2)",
        (neg_in_pos - noise.phi_plus).abs() <= 0.02 && (pos_in_neg - noise.phi_minus).abs() <= 0.01,
        format!(
            "negatives in first set {neg_in_pos:.4} (expected {:.4}), positives in second set {pos_in_neg:.4} (expected {:.4})",
            noise.phi_plus, noise.phi_minus
        ),
    ))
}

fn prior_recovery(seed: u64) -> Result<CheckResult> {
    let pr = prior(0.2);
    let f = sample_accept_fraction(pr, 50_000, seed)?;
    let est = estimate_pi_plus(f, true)?;
    Ok(CheckResult::new(
        "class prior recovered from the acceptance rate (prior 0.2)",
        (est - 0.2).abs() <= 0.02,
        format!("accepted {f:.4}, estimate {est:.4}"),
    ))
}

fn estimator_gradients(seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, Stream::Diagnostic);
    let loss = &Logistic;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..10);
        let sp = normal_vec(&mut rng, n, 2.0);
        let sn = normal_vec(&mut rng, n, 2.0);
        let pr = prior(rng.random_range(0.1..0.9));
        let noise = pr.noise_rates();
        let masks = select_confident(&sp, &sn, noise);
        let (theta, theta_prime) = pcomp_uu_thetas(pr);
        let teacher = sn.clone();
        let mut checks: Vec<Box<dyn Fn(&[f64], &[f64]) -> Option<RiskValue>>> = vec![
            Box::new(move |a, b| pc_unbiased(a, b, pr, loss).ok()),
            Box::new(move |a, b| ppc_risk(a, b, &masks, noise, loss).ok()),
            Box::new(move |a, b| biased_risk(a, b, loss).ok()),
            Box::new(move |a, b| noisy_unbiased_risk(a, b, noise, loss).ok()),
            Box::new(move |a, b| uu_risk(a, b, theta, theta_prime, pr, loss).ok()),
            Box::new(move |a, b| {
                consistency_penalty(a, &teacher).ok().map(|p| RiskValue {
                    value: p.value,
                    grad_pos: p.grad,
                    grad_neg: vec![0.0; b.len()],
                })
            }),
        ];
        // Away from the kink of the correction the corrected risk is smooth.
        if let Ok((b1, b2)) = corrected_brackets(&sp, &sn, pr, loss) {
            if b1.abs() > 1e-4 && b2.abs() > 1e-4 {
                for c in [Correction::Relu, Correction::Abs] {
                    checks.push(Box::new(move |a, b| pc_corrected(a, b, pr, loss, c).ok()));
                }
            }
        }
        for f in &checks {
            let err = score_gradient_error(&|a, b| f(a, b).expect("valid batch"), &sp, &sn);
            worst = worst.max(err);
        }
    }
    CheckResult::new(
        "estimator score gradients match finite differences",
        worst <= 1e-6,
        format!("max relative error {worst:.3e}"),
    )
}

fn model_gradients(seed: u64) -> Result<CheckResult> {
    let mut rng = stream_rng(seed, Stream::Diagnostic);
    let (mut worst_linear, mut worst_mlp) = (0.0f64, 0.0f64);
    for draw in 0..20u64 {
        let d = rng.random_range(1..6);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| normal_vec(&mut rng, d, 1.5)).collect();
        let coef = normal_vec(&mut rng, 5, 1.0);
        let w = normal_vec(&mut rng, d, 1.0);
        let linear = LinearModel::from_parts(w, normal_vec(&mut rng, 1, 1.0)[0]);
        worst_linear = worst_linear.max(max_relative_error(&linear, &xs, &coef, 1e-5));
        let mut mlp = MlpModel::new(d, &[8, 8], seed.wrapping_add(draw))?;
        // Nonzero biases keep units off the rectifier kink at exactly zero.
        let jitter = normal_vec(&mut rng, mlp.num_params(), 0.1);
        mlp.params_mut()
            .iter_mut()
            .zip(jitter)
            .for_each(|(p, j)| *p += j);
        worst_mlp = worst_mlp.max(max_relative_error(&mlp, &xs, &coef, 1e-5));
    }
    Ok(CheckResult::new(
        "model parameter gradients match finite differences",
        worst_linear <= 1e-4 && worst_mlp <= 1e-4,
        format!("max relative error linear {worst_linear:.3e}, mlp {worst_mlp:.3e}"),
    ))
}
