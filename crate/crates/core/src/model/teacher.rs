use super::ScoreModel;
use crate::error::{check_same_len, Error, Result};

/// Exponential moving average of a student's parameters:
/// `teacher <- alpha * teacher + (1 - alpha) * student`.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherModel<M> {
    model: M,
    alpha: f64,
}

impl<M: ScoreModel> TeacherModel<M> {
    /// Starts the average at the student's current parameters.
    pub fn new(student: &M, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            model: student.clone(),
            alpha,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn update(&mut self, student: &M) -> Result<()> {
        ema_update(self.model.params_mut(), student.params(), self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing coefficient must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// In-place moving-average step. Each result lies between the old teacher
/// value and the student value.
pub fn ema_update(teacher: &mut [f64], student: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    check_same_len(teacher.len(), student.len())?;
    let step = 1.0 - alpha;
    for (t, &s) in teacher.iter_mut().zip(student) {
        let (lo, hi) = if *t <= s { (*t, s) } else { (s, *t) };
        *t = (*t + step * (s - *t)).clamp(lo, hi);
    }
    Ok(())
}
