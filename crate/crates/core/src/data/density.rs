use crate::error::{check_same_len, Error, Result};
use crate::prior::ClassPrior;

/// Forward mixing of finite class-conditionals into the noisy pointwise
/// densities, followed by the inverse map back.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub noisy_pos: Vec<f64>,
    pub noisy_neg: Vec<f64>,
    pub recovered_pos: Vec<f64>,
    pub recovered_neg: Vec<f64>,
    pub max_abs_error: f64,
}

const NORMALIZATION_TOL: f64 = 1e-9;

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "probabilities must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(sum));
    }
    Ok(())
}

pub fn discrete_density_check(
    p_plus: &[f64],
    p_minus: &[f64],
    prior: ClassPrior,
) -> Result<DensityReport> {
    check_same_len(p_plus.len(), p_minus.len())?;
    check_distribution(p_plus)?;
    check_distribution(p_minus)?;
    let w = prior.mixture_weights();
    let (pp, pm) = (prior.pi_plus(), prior.pi_minus());

    let noisy_pos: Vec<f64> = p_plus
        .iter()
        .zip(p_minus)
        .map(|(a, b)| w.pos_set_true_pos * a + w.pos_set_true_neg * b)
        .collect();
    let noisy_neg: Vec<f64> = p_plus
        .iter()
        .zip(p_minus)
        .map(|(a, b)| w.neg_set_true_pos * a + w.neg_set_true_neg * b)
        .collect();
    let recovered_pos: Vec<f64> = noisy_pos
        .iter()
        .zip(&noisy_neg)
        .map(|(tp, tn)| (tp - pm * tn) / pp)
        .collect();
    let recovered_neg: Vec<f64> = noisy_pos
        .iter()
        .zip(&noisy_neg)
        .map(|(tp, tn)| (tn - pp * tp) / pm)
        .collect();
    let max_abs_error = recovered_pos
        .iter()
        .zip(p_plus)
        .chain(recovered_neg.iter().zip(p_minus))
        .map(|(r, t)| (r - t).abs())
        .fold(0.0, f64::max);
    Ok(DensityReport {
        noisy_pos,
        noisy_neg,
        recovered_pos,
        recovered_neg,
        max_abs_error,
    })
}
