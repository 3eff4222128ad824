use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Base learning rate of the reference fine-tuning recipe. Simulations rescale
/// it (see [`LrSchedule::SIM_BASE_LR`]) because solve-rate space is not
/// parameter space; only the schedule shape carries over.
pub const REFERENCE_BASE_LR: f64 = 5e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrShape {
    /// Linear warmup to `base_lr`, then cosine decay to zero at `total_steps`.
    WarmupCosine,
    /// `base_lr / (step + 1)`, no warmup.
    InverseTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: u64,
    pub shape: LrShape,
}

impl LrSchedule {
    pub const SIM_BASE_LR: f64 = 0.05;
    pub const DEFAULT_WARMUP_RATIO: f64 = 0.1;

    pub fn cosine(total_steps: u64) -> Self {
        LrSchedule {
            base_lr: Self::SIM_BASE_LR,
            warmup_ratio: Self::DEFAULT_WARMUP_RATIO,
            total_steps,
            shape: LrShape::WarmupCosine,
        }
    }

    pub fn inverse_time(base_lr: f64, total_steps: u64) -> Self {
        LrSchedule {
            base_lr,
            warmup_ratio: 0.0,
            total_steps,
            shape: LrShape::InverseTime,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base learning rate must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::invalid("warmup ratio must lie in [0, 1)"));
        }
        if self.total_steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_ratio * self.total_steps as f64).ceil() as u64
    }

    /// Learning rate at 0-based `step`.
    pub fn rate(&self, step: u64) -> f64 {
        match self.shape {
            LrShape::InverseTime => self.base_lr / (step as f64 + 1.0),
            LrShape::WarmupCosine => {
                let warmup = self.warmup_steps();
                if step < warmup {
                    self.base_lr * step as f64 / warmup as f64
                } else if step >= self.total_steps {
                    0.0
                } else {
                    let progress = (step - warmup) as f64 / (self.total_steps - warmup) as f64;
                    self.base_lr * 0.5 * (1.0 + (PI * progress).cos())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_shape() {
        let s = LrSchedule::cosine(1000);
        assert_eq!(s.warmup_steps(), 100);
        assert_eq!(s.rate(0), 0.0);
        assert!((s.rate(50) - 0.025).abs() < 1e-15);
        assert_eq!(s.rate(100), 0.05);
        assert!((s.rate(550) - 0.025).abs() < 1e-12);
        assert_eq!(s.rate(1000), 0.0);
        for t in 100..1000 {
            assert!(s.rate(t + 1) <= s.rate(t));
            assert!(s.rate(t) >= 0.0);
        }
        assert!(s.rate(999) < 1e-6);
    }

    #[test]
    fn inverse_time_shape() {
        let s = LrSchedule::inverse_time(0.5, 10);
        assert_eq!(s.rate(0), 0.5);
        assert_eq!(s.rate(4), 0.1);
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::cosine(0).validate().is_err());
        let mut s = LrSchedule::cosine(10);
        s.warmup_ratio = 1.0;
        assert!(s.validate().is_err());
    }
}
