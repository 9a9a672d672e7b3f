use super::ScoreModel;

/// `f(x) = <w, x> + b`. Parameters are stored as `[w_0, .., w_{d-1}, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    params: Vec<f64>,
}

impl LinearModel {
    /// All-zero model.
    pub fn new(dim: usize) -> Self {
        Self {
            params: vec![0.0; dim + 1],
        }
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        let mut params = weights;
        params.push(bias);
        Self { params }
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.params.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }
}

impl ScoreModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.params.len() - 1
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn param_labels(&self) -> Vec<String> {
        (0..self.input_dim())
            .map(|i| format!("linear.w.{i}"))
            .chain(std::iter::once("linear.b".to_string()))
            .collect()
    }

    #[inline]
    fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.weights()
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias()
    }

    fn accumulate_gradient(&self, x: &[f64], dscore: f64, grad: &mut [f64]) {
        let d = self.input_dim();
        for (g, v) in grad[..d].iter_mut().zip(x) {
            *g += dscore * v;
        }
        grad[d] += dscore;
    }
}
