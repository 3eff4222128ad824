use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::LrSchedule;
use crate::{Error, Result};

/// The policy being trained, reduced to what the scheduler can observe.
pub trait Learner {
    fn k(&self) -> usize;

    /// Current true solve rate of every cluster, each in `[0, 1]`.
    fn solve_rates(&self) -> &[f64];

    /// Correctness of one answer per id. The default answers each id
    /// correctly with the cluster's current solve rate.
    fn answer_batch<R: Rng + ?Sized>(&mut self, ids: &[String], cluster: usize, rng: &mut R) -> Vec<bool> {
        let mu = self.solve_rates()[cluster];
        ids.iter().map(|_| rng.random::<f64>() < mu).collect()
    }

    /// Applies one training step on `cluster` at 0-based `step`.
    fn observe_training(&mut self, cluster: usize, step: u64);

    /// Upper bound on any cluster's solve-rate change at `step`, if the
    /// learner guarantees one.
    fn drift_cap(&self, _step: u64) -> Option<f64> {
        None
    }
}

/// Fixed solve rates.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryLearner {
    mu: Vec<f64>,
}

impl StationaryLearner {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        check_rates(&mu)?;
        Ok(StationaryLearner { mu })
    }
}

impl Learner for StationaryLearner {
    fn k(&self) -> usize {
        self.mu.len()
    }

    fn solve_rates(&self) -> &[f64] {
        &self.mu
    }

    fn observe_training(&mut self, _cluster: usize, _step: u64) {}

    fn drift_cap(&self, _step: u64) -> Option<f64> {
        Some(0.0)
    }
}

/// Constants of the per-step drift bound `ε_t = h · g_max · α_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    /// Lipschitz constant of solve rate with respect to parameters.
    pub h: f64,
    /// Gradient clipping norm.
    pub g_max: f64,
    /// Fraction of the trained cluster's change passed to every other cluster.
    pub spillover: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams {
            h: 1.0,
            g_max: 0.1,
            spillover: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub initial: Vec<f64>,
    pub gains: Vec<f64>,
    #[serde(default)]
    pub drift: DriftParams,
    pub schedule: LrSchedule,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        check_rates(&self.initial)?;
        if self.gains.len() != self.initial.len() {
            return Err(Error::invalid(format!(
                "{} gains for {} clusters",
                self.gains.len(),
                self.initial.len()
            )));
        }
        if self.gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::invalid("learning gains must be finite and nonnegative"));
        }
        let d = &self.drift;
        if !(d.h >= 0.0 && d.g_max >= 0.0 && d.h.is_finite() && d.g_max.is_finite()) {
            return Err(Error::invalid("h and g_max must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&d.spillover) {
            return Err(Error::invalid("spillover must lie in [0, 1)"));
        }
        self.schedule.validate()
    }
}

/// Solve rates that improve on the cluster being trained, with every
/// per-step change capped at `h · g_max · α_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftingLearner {
    mu: Vec<f64>,
    gains: Vec<f64>,
    drift: DriftParams,
    schedule: LrSchedule,
}

impl DriftingLearner {
    pub fn new(config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        Ok(DriftingLearner {
            mu: config.initial.clone(),
            gains: config.gains.clone(),
            drift: config.drift,
            schedule: config.schedule,
        })
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    pub fn cap(&self, step: u64) -> f64 {
        self.drift.h * self.drift.g_max * self.schedule.rate(step)
    }

    /// The trained cluster moves by `min(g · α_t, ε_t)`; every other cluster
    /// moves by `spillover` times the trained cluster's realized change.
    pub fn drift_step(&mut self, trained: usize, step: u64) {
        let alpha = self.schedule.rate(step);
        let delta = (self.gains[trained] * alpha).min(self.cap(step));
        let before = self.mu[trained];
        self.mu[trained] = (before + delta).clamp(0.0, 1.0);
        let moved = self.mu[trained] - before;
        let spill = self.drift.spillover * moved;
        for (k, mu) in self.mu.iter_mut().enumerate() {
            if k != trained {
                *mu = (*mu + spill).clamp(0.0, 1.0);
            }
        }
    }
}

impl Learner for DriftingLearner {
    fn k(&self) -> usize {
        self.mu.len()
    }

    fn solve_rates(&self) -> &[f64] {
        &self.mu
    }

    fn observe_training(&mut self, cluster: usize, step: u64) {
        self.drift_step(cluster, step);
    }

    fn drift_cap(&self, step: u64) -> Option<f64> {
        Some(self.cap(step))
    }
}

fn check_rates(mu: &[f64]) -> Result<()> {
    if mu.is_empty() {
        return Err(Error::invalid("a learner needs at least one cluster"));
    }
    if let Some(bad) = mu.iter().find(|m| !(0.0..=1.0).contains(*m)) {
        return Err(Error::invalid(format!("solve rate {bad} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(gains: Vec<f64>) -> LearnerConfig {
        LearnerConfig {
            initial: vec![0.2, 0.5, 0.9],
            gains,
            drift: DriftParams::default(),
            schedule: LrSchedule::cosine(100),
        }
    }

    #[test]
    fn zero_learning_rate_means_no_change() {
        let mut l = DriftingLearner::new(&config(vec![5.0, 5.0, 5.0])).unwrap();
        l.drift_step(0, 0);
        assert_eq!(l.solve_rates(), [0.2, 0.5, 0.9]);
        l.drift_step(1, 100);
        assert_eq!(l.solve_rates(), [0.2, 0.5, 0.9]);
    }

    #[test]
    fn large_gain_is_capped_exactly() {
        let mut l = DriftingLearner::new(&config(vec![1e6, 0.0, 0.0])).unwrap();
        let cap = 1.0 * 0.1 * l.schedule().rate(10);
        l.drift_step(0, 10);
        assert_eq!(l.solve_rates()[0], 0.2 + cap);
        assert!((l.solve_rates()[1] - (0.5 + 0.2 * cap)).abs() < 1e-15);
    }

    #[test]
    fn small_gain_is_not_capped() {
        let mut l = DriftingLearner::new(&config(vec![0.01, 0.0, 0.0])).unwrap();
        let alpha = l.schedule().rate(10);
        l.drift_step(0, 10);
        assert_eq!(l.solve_rates()[0], 0.2 + 0.01 * alpha);
    }

    #[test]
    fn rates_stay_clamped() {
        let mut cfg = config(vec![1e6, 1e6, 1e6]);
        cfg.initial = vec![1.0, 0.99999, 0.0];
        let mut l = DriftingLearner::new(&cfg).unwrap();
        for t in 0..100 {
            l.drift_step((t % 3) as usize, t);
            assert!(l.solve_rates().iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }

    #[test]
    fn config_validation() {
        assert!(DriftingLearner::new(&config(vec![1.0])).is_err());
        assert!(DriftingLearner::new(&config(vec![-1.0, 0.0, 0.0])).is_err());
        let mut cfg = config(vec![0.0; 3]);
        cfg.initial[0] = 1.5;
        assert!(DriftingLearner::new(&cfg).is_err());
        let mut cfg = config(vec![0.0; 3]);
        cfg.drift.spillover = 1.0;
        assert!(DriftingLearner::new(&cfg).is_err());
    }
}
