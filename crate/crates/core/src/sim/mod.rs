//! Simulated learners and the episode harness used to exercise the scheduler
//! against drifting solve rates.

mod episode;
mod learner;
mod metrics;
mod schedule;

pub use episode::{compare_schedulers, run_episode, ComparisonEntry, ComparisonReport, Episode, EpisodeSettings, Policy};
pub use learner::{DriftParams, DriftingLearner, Learner, LearnerConfig, StationaryLearner};
pub use metrics::{heatmap_from_decisions, measure_vt, HeatmapCell, RunMetrics};
pub use schedule::{LrSchedule, LrShape, REFERENCE_BASE_LR};

use crate::reduction::{ReducedSet, Strategy};

/// A manifest of `k` clusters with `per_cluster` placeholder ids each, for
/// simulations that do not start from a real corpus.
pub fn synthetic_reduced_set(k: usize, per_cluster: usize) -> ReducedSet {
    ReducedSet {
        strategy: Strategy::Diverse,
        l: per_cluster,
        seed: None,
        clusters: (0..k)
            .map(|c| (0..per_cluster).map(|i| format!("c{c}-{i}")).collect())
            .collect(),
    }
}
