//! Minibatch training with Adam, per-epoch confident-example selection and
//! a moving-average teacher.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::PointwiseSets;
use crate::error::{check_same_len, Error, Result};
use crate::estimator::{
    consistency_penalty, select_confident, EstimatorKind, EstimatorSpec, SelectionMasks,
};
use crate::loss::Logistic;
use crate::model::{accumulate_batch_gradient, ScoreModel, TeacherModel};
use crate::rng::{stream_rng, Stream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }
}

/// One Adam update with bias correction. Weight decay is decoupled and
/// shrinks the parameters before the moment update.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    check_same_len(params.len(), grads.len())?;
    check_same_len(params.len(), state.m.len())?;
    check_same_len(params.len(), state.v.len())?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let shrink = 1.0 - lr * weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        params[i] *= shrink;
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
    Ok(())
}

/// When confident examples are re-selected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSchedule {
    /// Once at the start of every epoch, over the full observed sets.
    #[default]
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clamped to the number of pairs when larger.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub estimator: EstimatorSpec,
    pub selection_schedule: SelectionSchedule,
    /// Fraction of the epochs over which the consistency weight ramps up from 0.
    pub ramp_up_fraction: f64,
    /// Return the teacher rather than the student for the teacher estimator.
    pub evaluate_teacher: bool,
}

impl TrainConfig {
    /// 100 epochs, batch 256, learning rate 1e-3, weight decay 1e-5.
    pub fn new(estimator: EstimatorSpec, seed: u64) -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            seed,
            estimator,
            selection_schedule: SelectionSchedule::PerEpoch,
            ramp_up_fraction: 0.1,
            evaluate_teacher: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..=1.0).contains(&self.ramp_up_fraction) {
            return Err(Error::InvalidArgument(format!(
                "ramp-up fraction must lie in [0, 1], got {}",
                self.ramp_up_fraction
            )));
        }
        self.estimator.validate()
    }

    /// Consistency weight used during `epoch` (0-based).
    pub fn consistency_weight_at(&self, epoch: usize) -> f64 {
        let w = self.estimator.consistency_weight;
        let ramp = self.ramp_up_fraction * self.epochs as f64;
        if ramp <= 0.0 {
            w
        } else {
            w * (epoch as f64 / ramp).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-size weighted mean of the estimator over the epoch, without the penalty.
    pub risk: f64,
    pub penalty: f64,
    pub consistency_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected_pos: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected_neg: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub final_params: Vec<f64>,
}

impl TrainHistory {
    pub fn risks(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.risk).collect()
    }

    /// One JSON object per epoch, newline terminated.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.epochs {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<history>", e))?;
        }
        Ok(())
    }
}

fn scores_of<M: ScoreModel>(model: &M, xs: &[&[f64]]) -> Vec<f64> {
    xs.iter().map(|x| model.score_unchecked(x)).collect()
}

/// Trains `model` on the two noisy sets.
pub fn train<M: ScoreModel>(
    data: &PointwiseSets,
    mut model: M,
    config: &TrainConfig,
) -> Result<(M, TrainHistory)> {
    config.validate()?;
    data.validate()?;
    let dim = data.noisy_pos[0].len();
    if dim != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: dim,
        });
    }
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(config.epochs),
        final_params: Vec::new(),
    };
    if config.epochs == 0 {
        history.final_params = model.params().to_vec();
        return Ok((model, history));
    }

    let spec = &config.estimator;
    let loss = Logistic;
    let n = data.len();
    let batch_size = config.batch_size.min(n);
    let all_pos: Vec<&[f64]> = data.noisy_pos.iter().map(Vec::as_slice).collect();
    let all_neg: Vec<&[f64]> = data.noisy_neg.iter().map(Vec::as_slice).collect();

    let mut rng = stream_rng(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(model.num_params());
    let mut grad = vec![0.0; model.num_params()];
    let mut teacher = match spec.kind {
        EstimatorKind::Teacher => Some(TeacherModel::new(&model, spec.teacher_alpha)?),
        _ => None,
    };

    for epoch in 0..config.epochs {
        let masks = if spec.kind.uses_selection() {
            let sp = scores_of(&model, &all_pos);
            let sn = scores_of(&model, &all_neg);
            Some(select_confident(&sp, &sn, spec.noise))
        } else {
            None
        };
        let lambda = if teacher.is_some() {
            config.consistency_weight_at(epoch)
        } else {
            0.0
        };
        order.shuffle(&mut rng);

        let (mut risk_sum, mut penalty_sum) = (0.0, 0.0);
        for idx in order.chunks(batch_size) {
            let xp: Vec<&[f64]> = idx.iter().map(|&i| all_pos[i]).collect();
            let xn: Vec<&[f64]> = idx.iter().map(|&i| all_neg[i]).collect();
            let sp = scores_of(&model, &xp);
            let sn = scores_of(&model, &xn);
            let batch_masks = masks.as_ref().map(|m| m.gather(idx));
            let mut risk = spec.risk(&sp, &sn, batch_masks.as_ref(), &loss)?;
            risk_sum += risk.value * idx.len() as f64;

            if let Some(teacher) = &teacher {
                let penalty = batch_penalty(
                    teacher.model(),
                    &xp,
                    &xn,
                    &sp,
                    &sn,
                    batch_masks.as_ref(),
                    spec,
                )?;
                if let Some((value, gp, gn)) = penalty {
                    penalty_sum += value * idx.len() as f64;
                    for (g, d) in risk.grad_pos.iter_mut().zip(gp) {
                        *g += lambda * d;
                    }
                    for (g, d) in risk.grad_neg.iter_mut().zip(gn) {
                        *g += lambda * d;
                    }
                }
            }

            grad.fill(0.0);
            accumulate_batch_gradient(&model, &xp, &risk.grad_pos, &mut grad)?;
            accumulate_batch_gradient(&model, &xn, &risk.grad_neg, &mut grad)?;
            adam_step(
                model.params_mut(),
                &grad,
                &mut adam,
                config.learning_rate,
                config.weight_decay,
            )?;
            if let Some(teacher) = &mut teacher {
                teacher.update(&model)?;
            }
        }

        let (selected_pos, selected_neg) = match &masks {
            Some(m) => {
                let (p, q) = m.counts();
                (Some(p), Some(q))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            risk: risk_sum / n as f64,
            penalty: penalty_sum / n as f64,
            consistency_weight: lambda,
            selected_pos,
            selected_neg,
        });
    }

    let model = match teacher {
        Some(t) if config.evaluate_teacher => t.into_model(),
        _ => model,
    };
    history.final_params = model.params().to_vec();
    Ok((model, history))
}

/// Penalty value and its gradients for the positive-set and negative-set scores.
type PenaltyTerms = (f64, Vec<f64>, Vec<f64>);

/// Consistency penalty between student and teacher scores over the batch,
/// split back into gradients for the positive-set and negative-set scores.
fn batch_penalty<M: ScoreModel>(
    teacher: &M,
    xp: &[&[f64]],
    xn: &[&[f64]],
    sp: &[f64],
    sn: &[f64],
    masks: Option<&SelectionMasks>,
    spec: &EstimatorSpec,
) -> Result<Option<PenaltyTerms>> {
    let keep = |mask: Option<&Vec<bool>>, i: usize| {
        !spec.consistency_on_selected || mask.is_none_or(|m| m[i])
    };
    let pos_idx: Vec<usize> = (0..sp.len())
        .filter(|&i| keep(masks.map(|m| &m.pos), i))
        .collect();
    let neg_idx: Vec<usize> = (0..sn.len())
        .filter(|&i| keep(masks.map(|m| &m.neg), i))
        .collect();
    if pos_idx.is_empty() && neg_idx.is_empty() {
        return Ok(None);
    }
    let student: Vec<f64> = pos_idx
        .iter()
        .map(|&i| sp[i])
        .chain(neg_idx.iter().map(|&i| sn[i]))
        .collect();
    let target: Vec<f64> = pos_idx
        .iter()
        .map(|&i| teacher.score_unchecked(xp[i]))
        .chain(neg_idx.iter().map(|&i| teacher.score_unchecked(xn[i])))
        .collect();
    let penalty = consistency_penalty(&student, &target)?;
    let mut gp = vec![0.0; sp.len()];
    let mut gn = vec![0.0; sn.len()];
    let (head, tail) = penalty.grad.split_at(pos_idx.len());
    for (&i, &g) in pos_idx.iter().zip(head) {
        gp[i] = g;
    }
    for (&i, &g) in neg_idx.iter().zip(tail) {
        gn[i] = g;
    }
    Ok(Some((penalty.value, gp, gn)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sets, make_gaussian_task, GenerationMode, Label};
    use crate::estimator::selection_size;
    use crate::model::{LinearModel, MlpModel};
    use crate::prior::ClassPrior;

    fn sets(p: f64, n: usize, seed: u64) -> PointwiseSets {
        let pr = ClassPrior::new(p).unwrap();
        let task = make_gaussian_task(2, 2.5, pr, 1).unwrap();
        generate_sets(&task, pr, n, GenerationMode::Rejection, seed).unwrap()
    }

    fn config(kind: EstimatorKind, p: f64, epochs: usize) -> TrainConfig {
        let mut c = TrainConfig::new(EstimatorSpec::new(kind, ClassPrior::new(p).unwrap()), 9);
        c.epochs = epochs;
        c.batch_size = 64;
        c.learning_rate = 1e-2;
        c
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut params = vec![0.5, -1.0, 2.0];
        let mut state = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut params, &[0.0; 3], &mut state, 1e-3, 0.0).unwrap();
        }
        assert_eq!(params, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = vec![1.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[1.0], &mut state, 0.001, 0.0).unwrap();
        assert!((1.0 - params[0] - 0.001).abs() < 1e-9);
    }

    #[test]
    fn adam_applies_decoupled_decay() {
        let mut params = vec![2.0];
        let mut state = AdamState::new(1);
        adam_step(&mut params, &[0.0], &mut state, 0.1, 0.5).unwrap();
        assert!((params[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!(adam_step(&mut params, &[0.0, 1.0], &mut state, 0.1, 0.0).is_err());
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let data = sets(0.5, 50, 2);
        let model = MlpModel::new(2, &[4], 3).unwrap();
        let (out, history) = train(
            &data,
            model.clone(),
            &config(EstimatorKind::Unbiased, 0.5, 0),
        )
        .unwrap();
        assert_eq!(out.params(), model.params());
        assert!(history.epochs.is_empty());
    }

    #[test]
    fn training_is_bit_identical_across_runs() {
        let data = sets(0.4, 200, 4);
        for kind in EstimatorKind::ALL {
            let c = config(kind, 0.4, 5);
            let model = MlpModel::new(2, &[8], 5).unwrap();
            let (a, ha) = train(&data, model.clone(), &c).unwrap();
            let (b, hb) = train(&data, model, &c).unwrap();
            assert_eq!(a.params(), b.params());
            assert_eq!(ha, hb);
            assert_eq!(ha.epochs.len(), 5);
        }
    }

    #[test]
    fn progressive_mask_sizes_follow_floor_rule() {
        let p = 0.3;
        let data = sets(p, 101, 6);
        let noise = ClassPrior::new(p).unwrap().noise_rates();
        for kind in [EstimatorKind::Progressive, EstimatorKind::Teacher] {
            let (_, h) = train(&data, LinearModel::new(2), &config(kind, p, 6)).unwrap();
            for e in &h.epochs {
                assert_eq!(
                    e.selected_pos,
                    Some(selection_size(1.0 - noise.phi_plus, 101))
                );
                assert_eq!(
                    e.selected_neg,
                    Some(selection_size(1.0 - noise.phi_minus, 101))
                );
            }
        }
    }

    #[test]
    fn corrected_training_risk_is_nonnegative() {
        let data = sets(0.5, 300, 8);
        for kind in [EstimatorKind::CorrectedRelu, EstimatorKind::CorrectedAbs] {
            let model = MlpModel::new(2, &[32], 1).unwrap();
            let (_, h) = train(&data, model, &config(kind, 0.5, 20)).unwrap();
            assert!(h.risks().iter().all(|r| *r >= 0.0));
        }
    }

    #[test]
    fn consistency_weight_ramps_linearly() {
        let mut c = config(EstimatorKind::Teacher, 0.5, 20);
        c.estimator.consistency_weight = 2.0;
        assert_eq!(c.consistency_weight_at(0), 0.0);
        assert!((c.consistency_weight_at(1) - 1.0).abs() < 1e-15);
        assert_eq!(c.consistency_weight_at(5), 2.0);
        c.ramp_up_fraction = 0.0;
        assert_eq!(c.consistency_weight_at(0), 2.0);
    }

    #[test]
    fn teacher_is_returned_when_requested() {
        let data = sets(0.5, 100, 3);
        let mut c = config(EstimatorKind::Teacher, 0.5, 3);
        let (teacher, _) = train(&data, LinearModel::new(2), &c).unwrap();
        c.evaluate_teacher = false;
        let (student, _) = train(&data, LinearModel::new(2), &c).unwrap();
        assert_ne!(teacher.params(), student.params());
    }

    #[test]
    fn linear_model_learns_the_gaussian_task() {
        let pr = ClassPrior::new(0.5).unwrap();
        let task = make_gaussian_task(1, 3.0, pr, 0).unwrap();
        let data = generate_sets(&task, pr, 2000, GenerationMode::Rejection, 1).unwrap();
        let mut c = config(EstimatorKind::Unbiased, 0.5, 100);
        c.batch_size = 256;
        let (model, h) = train(&data, LinearModel::new(1), &c).unwrap();
        assert_eq!(h.final_params, model.params());
        let mut rng = crate::rng::stream_rng(5, Stream::TestData);
        let mut correct = 0;
        for _ in 0..20_000 {
            let e = crate::data::draw_labeled(&task, pr, &mut rng).unwrap();
            correct += (Label::from_score(model.score_unchecked(&e.features)) == e.label) as usize;
        }
        assert!(correct as f64 / 20_000.0 > 0.9);
    }

    #[test]
    fn rejects_invalid_configuration() {
        let data = sets(0.5, 20, 1);
        let mut c = config(EstimatorKind::Unbiased, 0.5, 1);
        c.batch_size = 0;
        assert!(train(&data, LinearModel::new(2), &c).is_err());
        let c = config(EstimatorKind::Unbiased, 0.5, 1);
        assert!(train(&data, LinearModel::new(3), &c).is_err());
    }

    #[test]
    fn history_serializes_one_line_per_epoch() {
        let data = sets(0.5, 40, 1);
        let (_, h) = train(
            &data,
            LinearModel::new(2),
            &config(EstimatorKind::Progressive, 0.5, 3),
        )
        .unwrap();
        let mut buf = Vec::new();
        h.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, h.epochs[0]);
    }
}
