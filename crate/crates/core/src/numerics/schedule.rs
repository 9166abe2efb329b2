use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from zero followed by half-cosine decay to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub min_lr: f64,
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} outside schedule of {} steps",
                self.total_steps
            )));
        }
        if step < self.warmup_steps {
            return Ok(self.base_lr * step as f64 / self.warmup_steps as f64);
        }
        let decay_steps = self.total_steps.saturating_sub(self.warmup_steps);
        if decay_steps == 0 {
            return Ok(self.base_lr);
        }
        let progress = (step - self.warmup_steps) as f64 / decay_steps as f64;
        Ok(self.min_lr
            + (self.base_lr - self.min_lr) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHED: LrSchedule = LrSchedule {
        base_lr: 1.5e-4,
        warmup_steps: 10,
        total_steps: 110,
        min_lr: 0.0,
    };

    #[test]
    fn warmup_end_hits_base_lr() {
        assert_eq!(SCHED.lr_at(10).unwrap(), 1.5e-4);
    }

    #[test]
    fn warmup_is_linear_from_zero() {
        assert_eq!(SCHED.lr_at(0).unwrap(), 0.0);
        assert!((SCHED.lr_at(5).unwrap() - 0.75e-4).abs() < 1e-18);
    }

    #[test]
    fn cosine_midpoint_is_half() {
        assert!((SCHED.lr_at(60).unwrap() - 7.5e-5).abs() < 1e-18);
    }

    #[test]
    fn final_step_reaches_min_lr() {
        let s = LrSchedule { min_lr: 1e-6, ..SCHED };
        assert!((s.lr_at(110).unwrap() - 1e-6).abs() < 1e-18);
        assert!(SCHED.lr_at(110).unwrap().abs() < 1e-18);
    }

    #[test]
    fn out_of_range_step() {
        assert!(SCHED.lr_at(111).is_err());
    }

    #[test]
    fn no_warmup_starts_at_base() {
        let s = LrSchedule { warmup_steps: 0, ..SCHED };
        assert_eq!(s.lr_at(0).unwrap(), 1.5e-4);
    }
}
