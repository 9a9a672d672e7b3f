use std::cell::RefCell;

use rand::Rng;

use super::ScoreModel;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Fully connected network with rectifier activations on hidden layers and a
/// single linear output unit.
///
/// Layer `l` maps `widths[l]` inputs to `widths[l + 1]` outputs; its weights
/// are stored row-major (one row per output unit) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

thread_local! {
    static ACTIVATIONS: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut model = Self::zeros(widths);
        let mut rng = stream_rng(seed, Stream::ModelInit);
        for l in 0..model.num_layers() {
            let (fan_in, fan_out) = (model.widths[l], model.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = model.offsets[l];
            for w in &mut model.params[start..start + fan_in * fan_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    fn zeros(widths: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0;
        for pair in widths.windows(2) {
            offsets.push(total);
            total += pair[0] * pair[1] + pair[1];
        }
        Self {
            widths,
            offsets,
            params: vec![0.0; total],
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Sets the output layer to zero so the network scores every input as 0.
    pub fn zero_output_layer(&mut self) {
        let l = self.num_layers() - 1;
        let start = self.offsets[l];
        let len = self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        self.params[start..start + len].fill(0.0);
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let start = self.offsets[l];
        let (w, rest) = self.params[start..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    /// Runs the network, leaving each layer's output (after activation) in `acts`.
    fn forward_into(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        let layers = self.num_layers();
        acts.resize_with(layers, Vec::new);
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let n_in = self.widths[l];
            let (prev, rest) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            let out = &mut rest[0];
            out.clear();
            out.extend(b.iter().enumerate().map(|(o, &bias)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = row.iter().zip(input).map(|(a, v)| a * v).sum::<f64>() + bias;
                if l + 1 < layers {
                    z.max(0.0)
                } else {
                    z
                }
            }));
        }
        acts[layers - 1][0]
    }
}

impl ScoreModel for MlpModel {
    fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn param_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.params.len());
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            for o in 0..n_out {
                for i in 0..n_in {
                    labels.push(format!("layer{l}.w.{o}.{i}"));
                }
            }
            for o in 0..n_out {
                labels.push(format!("layer{l}.b.{o}"));
            }
        }
        labels
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        ACTIVATIONS.with(|acts| self.forward_into(x, &mut acts.borrow_mut()))
    }

    fn accumulate_gradient(&self, x: &[f64], dscore: f64, grad: &mut [f64]) {
        ACTIVATIONS.with(|cell| {
            let mut acts = cell.borrow_mut();
            self.forward_into(x, &mut acts);
            let mut delta = vec![dscore];
            let mut next = Vec::new();
            for l in (0..self.num_layers()).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                let start = self.offsets[l];
                {
                    let (gw, gb) =
                        grad[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                    for o in 0..n_out {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        for (g, v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                            *g += d * v;
                        }
                        gb[o] += d;
                    }
                }
                if l == 0 {
                    break;
                }
                let (w, _) = self.layer(l);
                next.clear();
                next.resize(n_in, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (n, a) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *n += d * a;
                    }
                }
                // Rectifier: gradient passes only where the unit was active.
                for (n, &a) in next.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *n = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut next);
            }
        });
    }
}
