use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::learner::{DriftingLearner, Learner, LearnerConfig};
use super::metrics::{max_abs_change, RunMetrics};
use crate::reduction::ReducedSet;
use crate::scheduler::{self, average_reward, draw_batch, BanditState, DecisionRecord};
use crate::{Error, Result};

/// Slack allowed on the per-step drift check.
const DRIFT_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Thompson,
    Uniform,
    RoundRobin,
    /// Always picks the cluster with the lowest true solve rate.
    Oracle,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Thompson, Policy::Uniform, Policy::RoundRobin, Policy::Oracle];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Thompson => "thompson",
            Policy::Uniform => "uniform",
            Policy::RoundRobin => "round_robin",
            Policy::Oracle => "oracle",
        })
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheduling policy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSettings {
    pub policy: Policy,
    pub epsilon: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Steps per heatmap window.
    pub window: u64,
    pub seed: u64,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        EpisodeSettings {
            policy: Policy::Thompson,
            epsilon: scheduler::DEFAULT_EPSILON,
            batch_size: scheduler::DEFAULT_BATCH_SIZE,
            steps: 2_000,
            window: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub metrics: RunMetrics,
    pub decisions: Vec<DecisionRecord>,
}

/// Runs the select → answer → update → train loop for `settings.steps` steps.
///
/// Scheduling (posterior draws, uniform picks, batch sampling) uses the seeded
/// bandit generator; the learner's answers use an independent stream of the
/// same seed, so two policies see identical answer noise for identical batches.
pub fn run_episode<L: Learner>(settings: &EpisodeSettings, learner: &mut L, reduced: &ReducedSet) -> Result<Episode> {
    if settings.steps == 0 {
        return Err(Error::invalid("an episode needs at least one step"));
    }
    if settings.window == 0 {
        return Err(Error::invalid("window must be at least one step"));
    }
    let k = learner.k();
    if reduced.k() != k {
        return Err(Error::invalid(format!(
            "learner has {k} clusters but the manifest has {}",
            reduced.k()
        )));
    }
    if let Some(c) = reduced.clusters.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("manifest cluster {c} is empty")));
    }
    let mut state = BanditState::new(k, settings.epsilon, settings.seed)?;
    let mut env = ChaCha8Rng::seed_from_u64(settings.seed);
    env.set_stream(1);

    let steps = settings.steps;
    let windows = steps.div_ceil(settings.window) as usize;
    let mut selections = vec![vec![0u64; k]; windows];
    let mut rate_sums = vec![vec![0.0; k]; windows];
    let mut trajectory = Vec::with_capacity(steps as usize + 1);
    let mut vt = Vec::with_capacity(steps as usize);
    let mut regret = Vec::with_capacity(steps as usize);
    let mut decisions = Vec::with_capacity(steps as usize);
    let (mut vt_total, mut regret_total) = (0.0, 0.0);
    trajectory.push(learner.solve_rates().to_vec());

    for t in 0..steps {
        let before = learner.solve_rates().to_vec();
        let cluster = match settings.policy {
            Policy::Thompson => state.select_cluster(),
            Policy::Uniform => state.rng_mut().random_range(0..k),
            Policy::RoundRobin => (t % k as u64) as usize,
            Policy::Oracle => argmin(&before),
        };
        let ids = draw_batch(reduced.cluster(cluster), settings.batch_size, state.rng_mut())?;
        let bits = learner.answer_batch(&ids, cluster, &mut env);
        let r_avg = average_reward(&bits)?;
        state.update(cluster, r_avg)?;
        learner.observe_training(cluster, t);
        let after = learner.solve_rates().to_vec();

        let drift = max_abs_change(&before, &after);
        if let Some(cap) = learner.drift_cap(t) {
            if drift > cap + DRIFT_SLACK {
                return Err(Error::DriftBound { step: t, drift, cap });
            }
        }
        vt_total += drift;
        vt.push(vt_total);
        let best = before.iter().copied().fold(f64::INFINITY, f64::min);
        regret_total += before[cluster] - best;
        regret.push(regret_total);

        let w = (t / settings.window) as usize;
        selections[w][cluster] += 1;
        for (s, &m) in rate_sums[w].iter_mut().zip(&before) {
            *s += m;
        }
        decisions.push(DecisionRecord {
            t,
            cluster,
            r_avg,
            rewards: state.rewards().to_vec(),
            pulls: state.pulls().to_vec(),
        });
        trajectory.push(after);
    }

    let window_solve_rates = rate_sums
        .into_iter()
        .enumerate()
        .map(|(w, sums)| {
            let start = w as u64 * settings.window;
            let len = (steps - start).min(settings.window) as f64;
            sums.into_iter().map(|s| s / len).collect()
        })
        .collect();

    Ok(Episode {
        metrics: RunMetrics {
            policy: settings.policy.to_string(),
            seed: settings.seed,
            k,
            steps,
            window: settings.window,
            selections,
            window_solve_rates,
            trajectory,
            vt,
            regret,
        },
        decisions,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = k;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub policy: Policy,
    pub seed: u64,
    pub final_regret: f64,
    pub final_vt: f64,
    /// Cumulative pseudo-regret at the end of each window.
    pub regret_by_window: Vec<f64>,
    pub selections: Vec<Vec<u64>>,
    pub window_solve_rates: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub steps: u64,
    pub window: u64,
    pub entries: Vec<ComparisonEntry>,
}

impl ComparisonReport {
    pub fn entry(&self, policy: Policy, seed: u64) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.policy == policy && e.seed == seed)
    }
}

/// Runs every policy against a fresh drifting learner for every seed.
pub fn compare_schedulers(
    policies: &[Policy],
    learner: &LearnerConfig,
    reduced: &ReducedSet,
    base: &EpisodeSettings,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    let mut entries = Vec::with_capacity(policies.len() * seeds.len());
    for &seed in seeds {
        for &policy in policies {
            let settings = EpisodeSettings { policy, seed, ..*base };
            let mut l = DriftingLearner::new(learner)?;
            let run = run_episode(&settings, &mut l, reduced)?.metrics;
            let regret_by_window = (0..run.selections.len())
                .map(|w| {
                    let end = ((w as u64 + 1) * run.window).min(run.steps) as usize;
                    run.regret[end - 1]
                })
                .collect();
            entries.push(ComparisonEntry {
                policy,
                seed,
                final_regret: run.final_regret(),
                final_vt: run.final_vt(),
                regret_by_window,
                selections: run.selections,
                window_solve_rates: run.window_solve_rates,
            });
        }
    }
    Ok(ComparisonReport {
        steps: base.steps,
        window: base.window,
        entries,
    })
}
