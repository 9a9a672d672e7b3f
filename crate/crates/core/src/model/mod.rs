//! Score functions `f: R^d -> R` with exact parameter gradients.
//!
//! Parameters live in one flat vector per model so that optimizers and the
//! moving-average teacher can treat every model the same way.

mod linear;
mod mlp;
mod teacher;

pub use linear::LinearModel;
pub use mlp::MlpModel;
pub use teacher::{ema_update, TeacherModel};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};

pub trait ScoreModel: Clone + Send + Sync {
    fn input_dim(&self) -> usize;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// One label per parameter, in `params()` order.
    fn param_labels(&self) -> Vec<String>;

    /// Score without a dimension check.
    fn score_unchecked(&self, x: &[f64]) -> f64;

    /// Adds `dscore * d f(x) / d params` into `grad`.
    fn accumulate_gradient(&self, x: &[f64], dscore: f64, grad: &mut [f64]);

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x)?;
        Ok(self.score_unchecked(x))
    }

    fn scores<X: AsRef<[f64]>>(&self, xs: &[X]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.score(x.as_ref())).collect()
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Gradient of a batch objective with respect to every parameter, given
/// `d objective / d score_i` for each batch element.
pub fn grad_objective<M: ScoreModel, X: AsRef<[f64]>>(
    model: &M,
    xs: &[X],
    dscores: &[f64],
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.num_params()];
    accumulate_batch_gradient(model, xs, dscores, &mut grad)?;
    Ok(grad)
}

pub(crate) fn accumulate_batch_gradient<M: ScoreModel, X: AsRef<[f64]>>(
    model: &M,
    xs: &[X],
    dscores: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    check_same_len(xs.len(), dscores.len())?;
    check_same_len(grad.len(), model.num_params())?;
    for (x, &d) in xs.iter().zip(dscores) {
        check_dim(model.input_dim(), x.as_ref())?;
        if d != 0.0 {
            model.accumulate_gradient(x.as_ref(), d, grad);
        }
    }
    Ok(())
}

/// Which architecture to build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    Linear,
    Mlp { hidden: Vec<usize> },
}

impl ModelSpec {
    /// Two hidden layers of width 64.
    pub fn default_mlp() -> Self {
        ModelSpec::Mlp {
            hidden: vec![64, 64],
        }
    }

    pub fn build(&self, input_dim: usize, seed: u64) -> Result<AnyModel> {
        Ok(match self {
            ModelSpec::Linear => AnyModel::Linear(LinearModel::new(input_dim)),
            ModelSpec::Mlp { hidden } => AnyModel::Mlp(MlpModel::new(input_dim, hidden, seed)?),
        })
    }
}

/// Either model family behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Linear(LinearModel),
    Mlp(MlpModel),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Linear($m) => $body,
            AnyModel::Mlp($m) => $body,
        }
    };
}

impl ScoreModel for AnyModel {
    fn input_dim(&self) -> usize {
        dispatch!(self, m => m.input_dim())
    }

    fn params(&self) -> &[f64] {
        dispatch!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut [f64] {
        dispatch!(self, m => m.params_mut())
    }

    fn param_labels(&self) -> Vec<String> {
        dispatch!(self, m => m.param_labels())
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        dispatch!(self, m => m.score_unchecked(x))
    }

    fn accumulate_gradient(&self, x: &[f64], dscore: f64, grad: &mut [f64]) {
        dispatch!(self, m => m.accumulate_gradient(x, dscore, grad))
    }
}

/// Writes one `label value` line per parameter, values with 17 significant digits.
pub fn write_params<M: ScoreModel, W: Write>(model: &M, mut out: W) -> std::io::Result<()> {
    for (label, value) in model.param_labels().iter().zip(model.params()) {
        writeln!(out, "{label} {value:.16e}")?;
    }
    Ok(())
}

/// Loads parameters written by [`write_params`] into a model of the same shape.
pub fn read_params<M: ScoreModel, R: BufRead>(model: &mut M, input: R) -> Result<()> {
    let labels = model.param_labels();
    let mut values = Vec::with_capacity(labels.len());
    for (row, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<params>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: "<params>".into(),
            row: row + 1,
            message,
        };
        let (label, value) = line
            .split_once(' ')
            .ok_or_else(|| parse_err("expected `label value`".into()))?;
        let expected = labels
            .get(values.len())
            .ok_or_else(|| parse_err("more parameters than the model has".into()))?;
        if label != expected {
            return Err(parse_err(format!("expected {expected}, found {label}")));
        }
        values.push(
            value
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(e.to_string()))?,
        );
    }
    check_same_len(values.len(), labels.len())?;
    model.params_mut().copy_from_slice(&values);
    Ok(())
}

/// Finite-difference checks of parameter gradients.
pub mod gradcheck {
    use super::ScoreModel;

    /// Largest relative error between the analytic gradient of `sum_i c_i f(x_i)`
    /// and central differences with step `h`.
    pub fn max_relative_error<M: ScoreModel>(
        model: &M,
        xs: &[Vec<f64>],
        coef: &[f64],
        h: f64,
    ) -> f64 {
        let mut analytic = vec![0.0; model.num_params()];
        for (x, c) in xs.iter().zip(coef) {
            model.accumulate_gradient(x, *c, &mut analytic);
        }
        let objective = |m: &M| -> f64 {
            xs.iter()
                .zip(coef)
                .map(|(x, c)| c * m.score_unchecked(x))
                .sum()
        };
        let mut worst = 0.0f64;
        for k in 0..model.num_params() {
            let mut plus = model.clone();
            plus.params_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut()[k] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (analytic[k] - numeric).abs() / (1.0 + analytic[k].abs().max(numeric.abs()));
            worst = worst.max(err);
        }
        worst
    }
}
