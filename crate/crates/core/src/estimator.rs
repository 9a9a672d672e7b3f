//! Risk functionals over batch scores.
//!
//! Every function takes the scores of the noisy-positive set (first pair
//! elements) and the noisy-negative set (second pair elements) and returns
//! the risk together with its derivative with respect to each score, which
//! the trainer backpropagates through the model.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{check_same_len, Error, Result};
use crate::loss::MarginLoss;
use crate::prior::{ClassPrior, NoiseRates};

const P: Label = Label::Positive;
const N: Label = Label::Negative;

/// A risk value and its per-score gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<f64>,
}

impl RiskValue {
    fn zeros(n_pos: usize, n_neg: usize) -> Self {
        Self {
            value: 0.0,
            grad_pos: vec![0.0; n_pos],
            grad_neg: vec![0.0; n_neg],
        }
    }
}

fn check_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("empty score batch".into()));
    }
    Ok(())
}

fn check_pairs(scores_pos: &[f64], scores_neg: &[f64]) -> Result<()> {
    check_same_len(scores_pos.len(), scores_neg.len())?;
    check_nonempty(scores_pos.len())
}

/// `(1/n) sum_i [ l(s_i,+1) + l(s'_i,-1) - pi_plus l(s_i,-1) - pi_minus l(s'_i,+1) ]`.
///
/// Unbiased for the classification risk; the empirical value can be negative.
pub fn pc_unbiased(
    scores_pos: &[f64],
    scores_neg: &[f64],
    prior: ClassPrior,
    loss: &dyn MarginLoss,
) -> Result<RiskValue> {
    check_pairs(scores_pos, scores_neg)?;
    let n = scores_pos.len() as f64;
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());
    let mut r = RiskValue::zeros(scores_pos.len(), scores_neg.len());
    for (i, (&s, &t)) in scores_pos.iter().zip(scores_neg).enumerate() {
        r.value +=
            loss.value(s, P) + loss.value(t, N) - pp * loss.value(s, N) - pm * loss.value(t, P);
        r.grad_pos[i] = (loss.derivative(s, P) - pp * loss.derivative(s, N)) / n;
        r.grad_neg[i] = (loss.derivative(t, N) - pm * loss.derivative(t, P)) / n;
    }
    r.value /= n;
    Ok(r)
}

/// Non-negative correction applied to each grouped term of the corrected estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Relu,
    Abs,
}

impl Correction {
    fn apply(self, v: f64) -> (f64, f64) {
        match self {
            // At exactly zero the identity branch is taken.
            Correction::Relu if v >= 0.0 => (v, 1.0),
            Correction::Relu => (0.0, 0.0),
            Correction::Abs if v >= 0.0 => (v, 1.0),
            Correction::Abs => (-v, -1.0),
        }
    }
}

/// `g( (1/n) sum [l(s_i,+1) - pi_minus l(s'_i,+1)] ) + g( (1/n) sum [l(s'_i,-1) - pi_plus l(s_i,-1)] )`.
///
/// The two brackets estimate `pi_plus` times the positive-class risk and
/// `pi_minus` times the negative-class risk, both of which are non-negative.
pub fn pc_corrected(
    scores_pos: &[f64],
    scores_neg: &[f64],
    prior: ClassPrior,
    loss: &dyn MarginLoss,
    correction: Correction,
) -> Result<RiskValue> {
    let brackets = corrected_brackets(scores_pos, scores_neg, prior, loss)?;
    let n = scores_pos.len() as f64;
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());
    let (g_plus, d_plus) = correction.apply(brackets.0);
    let (g_minus, d_minus) = correction.apply(brackets.1);
    let mut r = RiskValue::zeros(scores_pos.len(), scores_neg.len());
    r.value = g_plus + g_minus;
    for (i, (&s, &t)) in scores_pos.iter().zip(scores_neg).enumerate() {
        r.grad_pos[i] = (d_plus * loss.derivative(s, P) - d_minus * pp * loss.derivative(s, N)) / n;
        r.grad_neg[i] = (d_minus * loss.derivative(t, N) - d_plus * pm * loss.derivative(t, P)) / n;
    }
    Ok(r)
}

/// The positive-class and negative-class brackets of [`pc_corrected`] before correction.
pub fn corrected_brackets(
    scores_pos: &[f64],
    scores_neg: &[f64],
    prior: ClassPrior,
    loss: &dyn MarginLoss,
) -> Result<(f64, f64)> {
    check_pairs(scores_pos, scores_neg)?;
    let n = scores_pos.len() as f64;
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());
    let (mut plus, mut minus) = (0.0, 0.0);
    for (&s, &t) in scores_pos.iter().zip(scores_neg) {
        plus += loss.value(s, P) - pm * loss.value(t, P);
        minus += loss.value(t, N) - pp * loss.value(s, N);
    }
    Ok((plus / n, minus / n))
}

/// Confident-example masks over the two noisy sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMasks {
    pub pos: Vec<bool>,
    pub neg: Vec<bool>,
}

impl SelectionMasks {
    pub fn full(n_pos: usize, n_neg: usize) -> Self {
        Self {
            pos: vec![true; n_pos],
            neg: vec![true; n_neg],
        }
    }

    pub fn counts(&self) -> (usize, usize) {
        (
            self.pos.iter().filter(|m| **m).count(),
            self.neg.iter().filter(|m| **m).count(),
        )
    }

    /// Masks restricted to the given indices, in that order.
    pub fn gather(&self, idx: &[usize]) -> SelectionMasks {
        SelectionMasks {
            pos: idx.iter().map(|&i| self.pos[i]).collect(),
            neg: idx.iter().map(|&i| self.neg[i]).collect(),
        }
    }
}

/// Number of elements kept out of `n` when a fraction `keep` is clean.
///
/// The product is floored; a tiny slack absorbs rounding in `keep * n`
/// so that e.g. `(2/3) * 3` keeps 2.
pub fn selection_size(keep: f64, n: usize) -> usize {
    let raw = keep * n as f64;
    ((raw + 1e-9).floor().max(0.0) as usize).min(n)
}

/// Keeps the `floor((1 - phi_plus) n)` highest-scored noisy positives and
/// the `floor((1 - phi_minus) n)` lowest-scored noisy negatives. Ties go to
/// the lower index.
pub fn select_confident(
    scores_pos: &[f64],
    scores_neg: &[f64],
    noise: NoiseRates,
) -> SelectionMasks {
    let keep_pos = selection_size(1.0 - noise.phi_plus, scores_pos.len());
    let keep_neg = selection_size(1.0 - noise.phi_minus, scores_neg.len());
    SelectionMasks {
        pos: top_k_mask(scores_pos, keep_pos, true),
        neg: top_k_mask(scores_neg, keep_neg, false),
    }
}

fn top_k_mask(scores: &[f64], k: usize, largest: bool) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = scores[a].total_cmp(&scores[b]);
        let ord = if largest { ord.reverse() } else { ord };
        ord.then(a.cmp(&b))
    });
    let mut mask = vec![false; scores.len()];
    for &i in &order[..k] {
        mask[i] = true;
    }
    mask
}

/// `(1/n) sum_i [ l(s_i,+1)/(1-rho_plus) [i in pos mask] + l(s'_i,-1)/(1-rho_minus) [i in neg mask] ]`.
pub fn ppc_risk(
    scores_pos: &[f64],
    scores_neg: &[f64],
    masks: &SelectionMasks,
    noise: NoiseRates,
    loss: &dyn MarginLoss,
) -> Result<RiskValue> {
    check_pairs(scores_pos, scores_neg)?;
    check_same_len(masks.pos.len(), scores_pos.len())?;
    check_same_len(masks.neg.len(), scores_neg.len())?;
    let n = scores_pos.len() as f64;
    let w_pos = 1.0 / (1.0 - noise.rho_plus);
    let w_neg = 1.0 / (1.0 - noise.rho_minus);
    let mut r = RiskValue::zeros(scores_pos.len(), scores_neg.len());
    for (i, &s) in scores_pos.iter().enumerate().filter(|(i, _)| masks.pos[*i]) {
        r.value += w_pos * loss.value(s, P);
        r.grad_pos[i] = w_pos * loss.derivative(s, P) / n;
    }
    for (i, &t) in scores_neg.iter().enumerate().filter(|(i, _)| masks.neg[*i]) {
        r.value += w_neg * loss.value(t, N);
        r.grad_neg[i] = w_neg * loss.derivative(t, N) / n;
    }
    r.value /= n;
    Ok(r)
}

/// Mean squared difference between student and teacher scores; the
/// gradient is with respect to the student scores only.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn consistency_penalty(student: &[f64], teacher: &[f64]) -> Result<Penalty> {
    check_same_len(student.len(), teacher.len())?;
    check_nonempty(student.len())?;
    let n = student.len() as f64;
    let mut value = 0.0;
    let grad = student
        .iter()
        .zip(teacher)
        .map(|(s, t)| {
            let d = s - t;
            value += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(Penalty {
        value: value / n,
        grad,
    })
}

/// Treats the noisy sets as clean and weights them equally.
pub fn biased_risk(
    scores_pos: &[f64],
    scores_neg: &[f64],
    loss: &dyn MarginLoss,
) -> Result<RiskValue> {
    check_pairs(scores_pos, scores_neg)?;
    let half_n = 2.0 * scores_pos.len() as f64;
    let mut r = RiskValue::zeros(scores_pos.len(), scores_neg.len());
    for (i, (&s, &t)) in scores_pos.iter().zip(scores_neg).enumerate() {
        r.value += loss.value(s, P) + loss.value(t, N);
        r.grad_pos[i] = loss.derivative(s, P) / half_n;
        r.grad_neg[i] = loss.derivative(t, N) / half_n;
    }
    r.value /= half_n;
    Ok(r)
}

/// Noise-corrected surrogate `((1 - rho_{-y}) l(z,y) - rho_y l(z,-y)) / (1 - rho_plus - rho_minus)`,
/// averaged with weight 1/2 over each noisy set.
pub fn noisy_unbiased_risk(
    scores_pos: &[f64],
    scores_neg: &[f64],
    noise: NoiseRates,
    loss: &dyn MarginLoss,
) -> Result<RiskValue> {
    check_pairs(scores_pos, scores_neg)?;
    let denom = 1.0 - noise.rho_plus - noise.rho_minus;
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise rates must satisfy rho_plus + rho_minus < 1, got {} + {}",
            noise.rho_plus, noise.rho_minus
        )));
    }
    let rho = |y: Label| match y {
        Label::Positive => noise.rho_plus,
        Label::Negative => noise.rho_minus,
    };
    let value = |z: f64, y: Label| {
        ((1.0 - rho(y.flip())) * loss.value(z, y) - rho(y) * loss.value(z, y.flip())) / denom
    };
    let deriv = |z: f64, y: Label| {
        ((1.0 - rho(y.flip())) * loss.derivative(z, y) - rho(y) * loss.derivative(z, y.flip()))
            / denom
    };
    let half_n = 2.0 * scores_pos.len() as f64;
    let mut r = RiskValue::zeros(scores_pos.len(), scores_neg.len());
    for (i, (&s, &t)) in scores_pos.iter().zip(scores_neg).enumerate() {
        r.value += value(s, P) + value(t, N);
        r.grad_pos[i] = deriv(s, P) / half_n;
        r.grad_neg[i] = deriv(t, N) / half_n;
    }
    r.value /= half_n;
    Ok(r)
}

/// Risk rewritten over two unlabeled sets with class priors `theta` and
/// `theta_prime`. The sets may differ in size.
pub fn uu_risk(
    scores_tr: &[f64],
    scores_tr_prime: &[f64],
    theta: f64,
    theta_prime: f64,
    prior: ClassPrior,
    loss: &dyn MarginLoss,
) -> Result<RiskValue> {
    check_nonempty(scores_tr.len())?;
    check_nonempty(scores_tr_prime.len())?;
    let gap = theta - theta_prime;
    if gap == 0.0 || !gap.is_finite() {
        return Err(Error::InvalidArgument(
            "theta and theta_prime must differ".into(),
        ));
    }
    let pp = prior.pi_plus();
    let a_pos = (1.0 - theta_prime) * pp / gap;
    let a_neg = -theta_prime * (1.0 - pp) / gap;
    let b_neg = theta * (1.0 - pp) / gap;
    let b_pos = -(1.0 - theta) * pp / gap;
    let (n, m) = (scores_tr.len() as f64, scores_tr_prime.len() as f64);
    let mut r = RiskValue::zeros(scores_tr.len(), scores_tr_prime.len());
    let (mut tr, mut tr_prime) = (0.0, 0.0);
    for (i, &s) in scores_tr.iter().enumerate() {
        tr += a_pos * loss.value(s, P) + a_neg * loss.value(s, N);
        r.grad_pos[i] = (a_pos * loss.derivative(s, P) + a_neg * loss.derivative(s, N)) / n;
    }
    for (i, &t) in scores_tr_prime.iter().enumerate() {
        tr_prime += b_neg * loss.value(t, N) + b_pos * loss.value(t, P);
        r.grad_neg[i] = (b_neg * loss.derivative(t, N) + b_pos * loss.derivative(t, P)) / m;
    }
    r.value = tr / n + tr_prime / m;
    Ok(r)
}

/// The priors of the two noisy sets, under which the unlabeled-unlabeled
/// risk coincides with [`pc_unbiased`].
pub fn pcomp_uu_thetas(prior: ClassPrior) -> (f64, f64) {
    let pp = prior.pi_plus();
    let denom = 1.0 - pp + pp * pp;
    (pp / denom, pp * pp / denom)
}

/// Largest relative error between analytic and central-difference score gradients.
pub fn score_gradient_error(
    f: &dyn Fn(&[f64], &[f64]) -> RiskValue,
    sp: &[f64],
    sn: &[f64],
) -> f64 {
    let h = 1e-5;
    let base = f(sp, sn);
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max(err);
    };
    for i in 0..sp.len() {
        let (mut up, mut down) = (sp.to_vec(), sp.to_vec());
        up[i] += h;
        down[i] -= h;
        check(
            base.grad_pos[i],
            (f(&up, sn).value - f(&down, sn).value) / (2.0 * h),
        );
    }
    for i in 0..sn.len() {
        let (mut up, mut down) = (sn.to_vec(), sn.to_vec());
        up[i] += h;
        down[i] -= h;
        check(
            base.grad_neg[i],
            (f(sp, &up).value - f(sp, &down).value) / (2.0 * h),
        );
    }
    worst
}

/// Which risk functional a method minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Unbiased,
    CorrectedRelu,
    CorrectedAbs,
    Progressive,
    Teacher,
    Biased,
    NoisyUnbiased,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::Unbiased,
        EstimatorKind::CorrectedRelu,
        EstimatorKind::CorrectedAbs,
        EstimatorKind::Progressive,
        EstimatorKind::Teacher,
        EstimatorKind::Biased,
        EstimatorKind::NoisyUnbiased,
    ];

    /// Method name used in reports.
    pub fn method_name(self) -> &'static str {
        match self {
            EstimatorKind::Unbiased => "Pcomp-Unbiased",
            EstimatorKind::CorrectedRelu => "Pcomp-ReLU",
            EstimatorKind::CorrectedAbs => "Pcomp-ABS",
            EstimatorKind::Progressive => "RankPruning",
            EstimatorKind::Teacher => "Pcomp-Teacher",
            EstimatorKind::Biased => "Binary-Biased",
            EstimatorKind::NoisyUnbiased => "Noisy-Unbiased",
        }
    }

    /// Short command-line token.
    pub fn token(self) -> &'static str {
        match self {
            EstimatorKind::Unbiased => "unbiased",
            EstimatorKind::CorrectedRelu => "relu",
            EstimatorKind::CorrectedAbs => "abs",
            EstimatorKind::Progressive => "progressive",
            EstimatorKind::Teacher => "teacher",
            EstimatorKind::Biased => "biased",
            EstimatorKind::NoisyUnbiased => "noisy-unbiased",
        }
    }

    /// Whether training re-selects confident examples every epoch.
    pub fn uses_selection(self) -> bool {
        matches!(self, EstimatorKind::Progressive | EstimatorKind::Teacher)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.method_name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let alias = match lower.as_str() {
            "corrected-relu" | "corrected_relu" => Some(EstimatorKind::CorrectedRelu),
            "corrected-abs" | "corrected_abs" => Some(EstimatorKind::CorrectedAbs),
            "rankpruning" | "rank-pruning" => Some(EstimatorKind::Progressive),
            "noisy_unbiased" => Some(EstimatorKind::NoisyUnbiased),
            _ => None,
        };
        alias
            .or_else(|| {
                EstimatorKind::ALL
                    .into_iter()
                    .find(|k| k.token() == lower || k.method_name().eq_ignore_ascii_case(&lower))
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// A fully parameterized risk functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub prior: ClassPrior,
    pub noise: NoiseRates,
    /// Weight of the consistency penalty (teacher only).
    pub consistency_weight: f64,
    /// Smoothing coefficient of the moving-average teacher (teacher only).
    pub teacher_alpha: f64,
    /// Compute the consistency penalty on selected examples only instead of
    /// the whole batch.
    pub consistency_on_selected: bool,
}

impl EstimatorSpec {
    /// Noise rates derived from `prior`; teacher defaults `alpha = 0.99`,
    /// consistency weight 1.
    pub fn new(kind: EstimatorKind, prior: ClassPrior) -> Self {
        Self {
            kind,
            prior,
            noise: prior.noise_rates(),
            consistency_weight: 1.0,
            teacher_alpha: 0.99,
            consistency_on_selected: false,
        }
    }

    pub fn method_name(&self) -> &'static str {
        self.kind.method_name()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let derived = self.prior.noise_rates();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        if !(close(derived.rho_plus, self.noise.rho_plus)
            && close(derived.rho_minus, self.noise.rho_minus)
            && close(derived.phi_plus, self.noise.phi_plus)
            && close(derived.phi_minus, self.noise.phi_minus))
        {
            return Err(Error::InvalidArgument(
                "noise rates are inconsistent with the class prior".into(),
            ));
        }
        if !(self.consistency_weight >= 0.0 && self.consistency_weight.is_finite()) {
            return Err(Error::InvalidArgument(
                "consistency weight must be non-negative".into(),
            ));
        }
        if self.kind == EstimatorKind::Teacher
            && !(self.teacher_alpha > 0.0 && self.teacher_alpha < 1.0)
        {
            return Err(Error::InvalidArgument(
                "teacher alpha must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Evaluates the risk on a batch. Selection-based kinds need masks for the batch.
    pub fn risk(
        &self,
        scores_pos: &[f64],
        scores_neg: &[f64],
        masks: Option<&SelectionMasks>,
        loss: &dyn MarginLoss,
    ) -> Result<RiskValue> {
        match self.kind {
            EstimatorKind::Unbiased => pc_unbiased(scores_pos, scores_neg, self.prior, loss),
            EstimatorKind::CorrectedRelu => {
                pc_corrected(scores_pos, scores_neg, self.prior, loss, Correction::Relu)
            }
            EstimatorKind::CorrectedAbs => {
                pc_corrected(scores_pos, scores_neg, self.prior, loss, Correction::Abs)
            }
            EstimatorKind::Progressive | EstimatorKind::Teacher => {
                let masks = masks.ok_or_else(|| {
                    Error::InvalidArgument(
                        "selection masks are required for progressive estimators".into(),
                    )
                })?;
                ppc_risk(scores_pos, scores_neg, masks, self.noise, loss)
            }
            EstimatorKind::Biased => biased_risk(scores_pos, scores_neg, loss),
            EstimatorKind::NoisyUnbiased => {
                noisy_unbiased_risk(scores_pos, scores_neg, self.noise, loss)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Logistic;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn prior(p: f64) -> ClassPrior {
        ClassPrior::new(p).unwrap()
    }

    const L: &Logistic = &Logistic;

    #[test]
    fn unbiased_examples() {
        for p in [0.2, 0.5, 0.8] {
            let r = pc_unbiased(&[0.0; 4], &[0.0; 4], prior(p), L).unwrap();
            assert!((r.value - LN_2).abs() < 1e-15);
        }
        let r = pc_unbiased(&[1.0], &[-1.0], prior(0.5), L).unwrap();
        assert!((r.value + 0.686738).abs() < 1e-6);
        assert!(pc_unbiased(&[1.0], &[1.0, 2.0], prior(0.5), L).is_err());
        assert!(pc_unbiased(&[], &[], prior(0.5), L).is_err());
    }

    #[test]
    fn corrected_examples() {
        let (b1, b2) = corrected_brackets(&[1.0], &[-1.0], prior(0.5), L).unwrap();
        assert!((b1 + 0.343369).abs() < 1e-6 && (b2 + 0.343369).abs() < 1e-6);
        let relu = pc_corrected(&[1.0], &[-1.0], prior(0.5), L, Correction::Relu).unwrap();
        assert_eq!(relu.value, 0.0);
        assert_eq!(relu.grad_pos, vec![0.0]);
        let abs = pc_corrected(&[1.0], &[-1.0], prior(0.5), L, Correction::Abs).unwrap();
        assert!((abs.value - 0.686738).abs() < 1e-6);
        assert!(pc_corrected(&[1.0, 2.0], &[-1.0], prior(0.5), L, Correction::Abs).is_err());
    }

    #[test]
    fn selection_examples() {
        let noise = prior(0.5).noise_rates();
        let m = select_confident(&[2.0, -1.0], &[-2.0, 0.5], noise);
        assert_eq!(m.pos, vec![true, false]);
        assert_eq!(m.neg, vec![true, false]);

        let m = select_confident(&[1.0, 1.0, 0.0], &[0.0, 0.0, 0.0], noise);
        assert_eq!(m.pos, vec![true, true, false]);
        assert_eq!(m.neg, vec![true, true, false]);

        let m = select_confident(&[0.3, -4.0, 9.0], &[1.0, 2.0, 3.0], NoiseRates::clean());
        assert_eq!(m.counts(), (3, 3));
    }

    #[test]
    fn selection_size_floors() {
        assert_eq!(selection_size(2.0 / 3.0, 2), 1);
        assert_eq!(selection_size(2.0 / 3.0, 3), 2);
        assert_eq!(selection_size(1.0, 7), 7);
        assert_eq!(selection_size(0.0, 7), 0);
        assert_eq!(selection_size(0.238_095, 100), 23);
    }

    #[test]
    fn progressive_examples() {
        let noise = prior(0.5).noise_rates();
        let (sp, sn) = ([2.0, -1.0], [-2.0, 0.5]);
        let masks = select_confident(&sp, &sn, noise);
        let r = ppc_risk(&sp, &sn, &masks, noise, L).unwrap();
        assert!((r.value - 0.190392).abs() < 1e-6);
        assert_eq!(r.grad_pos[1], 0.0);
        assert_eq!(r.grad_neg[1], 0.0);

        let empty = SelectionMasks {
            pos: vec![false; 2],
            neg: vec![false; 2],
        };
        assert_eq!(ppc_risk(&sp, &sn, &empty, noise, L).unwrap().value, 0.0);

        let clean = ppc_risk(
            &sp,
            &sn,
            &SelectionMasks::full(2, 2),
            NoiseRates::clean(),
            L,
        )
        .unwrap();
        let plain = (L.value(2.0, P) + L.value(-1.0, P) + L.value(-2.0, N) + L.value(0.5, N)) / 2.0;
        assert!((clean.value - plain).abs() < 1e-15);

        let short = SelectionMasks::full(1, 2);
        assert!(ppc_risk(&sp, &sn, &short, noise, L).is_err());
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(
            consistency_penalty(&[1.0, 2.0], &[1.0, 2.0]).unwrap().value,
            0.0
        );
        assert_eq!(consistency_penalty(&[0.0], &[2.0]).unwrap().value, 4.0);
        let p = consistency_penalty(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(p.value, 5.0);
        assert_eq!(p.grad, vec![1.0, 3.0]);
        assert!(consistency_penalty(&[1.0], &[]).is_err());
    }

    #[test]
    fn biased_examples() {
        assert!((biased_risk(&[0.0, 0.0], &[0.0, 0.0], L).unwrap().value - LN_2).abs() < 1e-15);
        assert!(biased_risk(&[1e4], &[-1e4], L).unwrap().value < 1e-300);
        assert!((biased_risk(&[1.0], &[-1.0], L).unwrap().value - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn noisy_unbiased_examples() {
        let noise = prior(0.5).noise_rates();
        assert!(
            (noisy_unbiased_risk(&[0.0; 3], &[0.0; 3], noise, L)
                .unwrap()
                .value
                - LN_2)
                .abs()
                < 1e-14
        );
        // Single term at z = 1, y = +1: the positive-set half carries weight 1/2.
        let r = noisy_unbiased_risk(&[1.0], &[0.0], noise, L).unwrap();
        let term = 2.0 * r.value - LN_2;
        assert!((term + 0.686738).abs() < 1e-6, "{term}");
        let sp = [0.3, -1.2, 2.0];
        let sn = [-0.7, 0.1, 4.0];
        let clean = noisy_unbiased_risk(&sp, &sn, NoiseRates::clean(), L).unwrap();
        let biased = biased_risk(&sp, &sn, L).unwrap();
        assert_eq!(clean.value, biased.value);
        let bad = NoiseRates {
            rho_plus: 0.6,
            rho_minus: 0.4,
            ..NoiseRates::clean()
        };
        assert!(noisy_unbiased_risk(&sp, &sn, bad, L).is_err());
    }

    #[test]
    fn uu_examples() {
        let pr = prior(0.3);
        for (theta, theta_prime) in [(0.9, 0.1), (0.4, 0.7), pcomp_uu_thetas(pr)] {
            let r = uu_risk(&[0.0; 3], &[0.0; 5], theta, theta_prime, pr, L).unwrap();
            assert!((r.value - LN_2).abs() < 1e-14);
        }
        assert!(uu_risk(&[0.0], &[0.0], 0.5, 0.5, pr, L).is_err());
    }

    #[test]
    fn uu_recovers_positive_unlabeled_risk() {
        // theta = 1, theta' = pi_plus with positive and unlabeled scores.
        let pr = prior(0.35);
        let pos = [0.5, 1.5, -0.2, 2.2];
        let unl = [-1.0, 0.3, 0.9, -2.5, 0.0];
        let pu = {
            let pp = pr.pi_plus();
            let a: f64 = pos
                .iter()
                .map(|&s| pp * (L.value(s, P) - L.value(s, N)))
                .sum::<f64>()
                / pos.len() as f64;
            let b: f64 = unl.iter().map(|&s| L.value(s, N)).sum::<f64>() / unl.len() as f64;
            a + b
        };
        let uu = uu_risk(&pos, &unl, 1.0, pr.pi_plus(), pr, L).unwrap();
        assert!((uu.value - pu).abs() < 1e-12);
    }

    #[test]
    fn method_names_parse() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.token().parse::<EstimatorKind>().unwrap(), k);
            assert_eq!(k.method_name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("nonsense".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = EstimatorSpec::new(EstimatorKind::Teacher, prior(0.3));
        assert!(spec.validate().is_ok());
        spec.noise.rho_plus += 0.01;
        assert!(spec.validate().is_err());
        let mut spec = EstimatorSpec::new(EstimatorKind::Teacher, prior(0.3));
        spec.teacher_alpha = 1.0;
        assert!(spec.validate().is_err());
        let spec = EstimatorSpec::new(EstimatorKind::Progressive, prior(0.3));
        assert!(spec.risk(&[0.0], &[0.0], None, L).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..8);
            let sp: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let sn: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let pr = prior(rng.random_range(0.1..0.9));
            let noise = pr.noise_rates();
            let masks = select_confident(&sp, &sn, noise);
            let (theta, theta_prime) = pcomp_uu_thetas(pr);
            let (b1, b2) = corrected_brackets(&sp, &sn, pr, L).unwrap();
            let mut fns: Vec<Box<dyn Fn(&[f64], &[f64]) -> RiskValue>> = vec![
                Box::new(move |a: &[f64], b: &[f64]| pc_unbiased(a, b, pr, L).unwrap()),
                Box::new(move |a: &[f64], b: &[f64]| ppc_risk(a, b, &masks, noise, L).unwrap()),
                Box::new(|a: &[f64], b: &[f64]| biased_risk(a, b, L).unwrap()),
                Box::new(move |a: &[f64], b: &[f64]| noisy_unbiased_risk(a, b, noise, L).unwrap()),
                Box::new(move |a: &[f64], b: &[f64]| {
                    uu_risk(a, b, theta, theta_prime, pr, L).unwrap()
                }),
                Box::new({
                    // The teacher scores are constants; only the student side is differentiated.
                    let teacher = sn.clone();
                    move |a: &[f64], b: &[f64]| {
                        let p = consistency_penalty(a, &teacher).unwrap();
                        RiskValue {
                            value: p.value,
                            grad_pos: p.grad,
                            grad_neg: vec![0.0; b.len()],
                        }
                    }
                }),
            ];
            if b1.abs() > 1e-4 && b2.abs() > 1e-4 {
                fns.push(Box::new(move |a: &[f64], b: &[f64]| {
                    pc_corrected(a, b, pr, L, Correction::Relu).unwrap()
                }));
                fns.push(Box::new(move |a: &[f64], b: &[f64]| {
                    pc_corrected(a, b, pr, L, Correction::Abs).unwrap()
                }));
            }
            for f in &fns {
                let err = score_gradient_error(f.as_ref(), &sp, &sn);
                assert!(err < 1e-6, "relative error {err}");
            }
        }
    }

    #[test]
    fn separable_model_selects_only_clean_examples() {
        use crate::data::{generate_sets, make_gaussian_task, GenerationMode};
        for p in [0.2, 0.5, 0.8] {
            let pr = prior(p);
            let task = make_gaussian_task(2, 2.0, pr, 3).unwrap();
            let sets = generate_sets(&task, pr, 400, GenerationMode::Rejection, 5).unwrap();
            let (lp, ln) = (
                sets.latent_pos.clone().unwrap(),
                sets.latent_neg.clone().unwrap(),
            );
            // An oracle scorer that separates latent classes perfectly.
            let score = |l: &Label, x: &[f64]| l.sign() * 10.0 + x[0] * 1e-3;
            let sp: Vec<f64> = sets
                .noisy_pos
                .iter()
                .zip(&lp)
                .map(|(x, l)| score(l, x))
                .collect();
            let sn: Vec<f64> = sets
                .noisy_neg
                .iter()
                .zip(&ln)
                .map(|(x, l)| score(l, x))
                .collect();
            let masks = select_confident(&sp, &sn, pr.noise_rates());
            let true_pos = lp.iter().filter(|l| l.is_positive()).count();
            let true_neg = ln.iter().filter(|l| !l.is_positive()).count();
            let (kp, kn) = masks.counts();
            for (i, l) in lp.iter().enumerate() {
                if masks.pos[i] && kp <= true_pos {
                    assert!(l.is_positive());
                }
            }
            for (i, l) in ln.iter().enumerate() {
                if masks.neg[i] && kn <= true_neg {
                    assert!(!l.is_positive());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn corrected_is_nonnegative_and_matches_unbiased_when_brackets_are(
            raw in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 1..20),
            p in 0.05f64..0.95,
        ) {
            let (sp, sn): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let pr = prior(p);
            let unbiased = pc_unbiased(&sp, &sn, pr, L).unwrap().value;
            let (b1, b2) = corrected_brackets(&sp, &sn, pr, L).unwrap();
            prop_assert!((b1 + b2 - unbiased).abs() < 1e-12);
            for c in [Correction::Relu, Correction::Abs] {
                let v = pc_corrected(&sp, &sn, pr, L, c).unwrap().value;
                prop_assert!(v >= 0.0);
                if b1 >= 0.0 && b2 >= 0.0 {
                    prop_assert!((v - unbiased).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn uu_risk_with_pcomp_thetas_equals_pairwise_risk(
            raw in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 1..30),
            p in 0.05f64..0.95,
        ) {
            let (sp, sn): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let pr = prior(p);
            let (theta, theta_prime) = pcomp_uu_thetas(pr);
            let uu = uu_risk(&sp, &sn, theta, theta_prime, pr, L).unwrap();
            let pc = pc_unbiased(&sp, &sn, pr, L).unwrap();
            prop_assert!((uu.value - pc.value).abs() <= 1e-9);
        }
    }
}
