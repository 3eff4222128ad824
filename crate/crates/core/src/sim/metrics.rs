use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scheduler::DecisionRecord;
use crate::{Error, Result};

/// Everything recorded during one simulated episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub policy: String,
    pub seed: u64,
    pub k: usize,
    pub steps: u64,
    pub window: u64,
    /// Selection counts, one row per window of `window` steps.
    pub selections: Vec<Vec<u64>>,
    /// Mean true solve rate of each cluster over each window.
    pub window_solve_rates: Vec<Vec<f64>>,
    /// True solve rates before the first step and after every step (`steps + 1` rows).
    pub trajectory: Vec<Vec<f64>>,
    /// Cumulative reward variation after every step.
    pub vt: Vec<f64>,
    /// Cumulative pseudo-regret against the lowest-solve-rate arm.
    pub regret: Vec<f64>,
}

impl RunMetrics {
    pub fn final_vt(&self) -> f64 {
        self.vt.last().copied().unwrap_or(0.0)
    }

    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    /// Share of each cluster among the selections of window `w`.
    pub fn window_shares(&self, w: usize) -> Vec<f64> {
        shares(&self.selections[w])
    }

    /// Share of each cluster over the last `windows` windows.
    pub fn tail_shares(&self, windows: usize) -> Vec<f64> {
        let start = self.selections.len().saturating_sub(windows);
        let mut counts = vec![0u64; self.k];
        for row in &self.selections[start..] {
            for (c, &x) in counts.iter_mut().zip(row) {
                *c += x;
            }
        }
        shares(&counts)
    }

    pub fn heatmap(&self) -> Vec<HeatmapCell> {
        let mut cells = Vec::with_capacity(self.selections.len() * self.k);
        for (w, (counts, rates)) in self.selections.iter().zip(&self.window_solve_rates).enumerate() {
            let total: u64 = counts.iter().sum();
            for c in 0..self.k {
                cells.push(HeatmapCell {
                    window: w,
                    start: w as u64 * self.window,
                    cluster: c,
                    selections: counts[c],
                    share: if total == 0 { 0.0 } else { counts[c] as f64 / total as f64 },
                    solve_rate: Some(rates[c]),
                });
            }
        }
        cells
    }

    /// One summary row: policy, seed, steps, final V_T, final regret, then
    /// the overall selection share of every cluster.
    pub fn summary_csv_row(&self) -> String {
        let all = self.tail_shares(self.selections.len());
        let mut row = format!(
            "{},{},{},{},{}",
            self.policy,
            self.seed,
            self.steps,
            self.final_vt(),
            self.final_regret()
        );
        for s in all {
            let _ = write!(row, ",{s}");
        }
        row
    }

    pub fn summary_csv_header(k: usize) -> String {
        let mut header = "policy,seed,steps,vt,regret".to_string();
        for c in 0..k {
            let _ = write!(header, ",share_{c}");
        }
        header
    }
}

fn shares(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

/// Cumulative `Σ max_k |μ_k(t+1) − μ_k(t)|` over consecutive trajectory rows.
/// The returned trace has one entry per transition.
pub fn measure_vt(trajectory: &[Vec<f64>]) -> Result<Vec<f64>> {
    if trajectory.len() < 2 {
        return Err(Error::invalid("V_T needs a trajectory of at least two steps"));
    }
    let mut total = 0.0;
    let mut trace = Vec::with_capacity(trajectory.len() - 1);
    for pair in trajectory.windows(2) {
        if pair[0].len() != pair[1].len() {
            return Err(Error::DimensionMismatch {
                expected: pair[0].len(),
                found: pair[1].len(),
            });
        }
        total += max_abs_change(&pair[0], &pair[1]);
        trace.push(total);
    }
    Ok(trace)
}

pub(crate) fn max_abs_change(before: &[f64], after: &[f64]) -> f64 {
    before
        .iter()
        .zip(after)
        .fold(0.0, |mx: f64, (a, b)| mx.max((b - a).abs()))
}

/// One (window, cluster) cell of the selection heatmap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub window: usize,
    pub start: u64,
    pub cluster: usize,
    pub selections: u64,
    pub share: f64,
    /// True mean solve rate in simulations; mean observed batch reward when
    /// rebuilt from a decision log. `None` if the cluster was never selected.
    pub solve_rate: Option<f64>,
}

impl HeatmapCell {
    pub fn csv_header() -> &'static str {
        "window,start,cluster,selections,share,solve_rate"
    }

    pub fn csv_row(&self) -> String {
        let rate = self.solve_rate.map_or(String::new(), |r| r.to_string());
        format!(
            "{},{},{},{},{},{}",
            self.window, self.start, self.cluster, self.selections, self.share, rate
        )
    }
}

/// Rebuilds heatmap data from a decision log: selection counts and the mean
/// observed reward per cluster per window of `window` steps.
pub fn heatmap_from_decisions(decisions: &[DecisionRecord], k: usize, window: u64) -> Result<Vec<HeatmapCell>> {
    if window == 0 {
        return Err(Error::invalid("window must be at least one step"));
    }
    let Some(last) = decisions.iter().map(|d| d.t).max() else {
        return Ok(Vec::new());
    };
    let windows = (last / window + 1) as usize;
    let mut counts = vec![vec![0u64; k]; windows];
    let mut reward = vec![vec![0.0; k]; windows];
    for d in decisions {
        if d.cluster >= k {
            return Err(Error::invalid(format!("decision at t = {} names cluster {}", d.t, d.cluster)));
        }
        let w = (d.t / window) as usize;
        counts[w][d.cluster] += 1;
        reward[w][d.cluster] += d.r_avg;
    }
    let mut cells = Vec::with_capacity(windows * k);
    for w in 0..windows {
        let total: u64 = counts[w].iter().sum();
        for c in 0..k {
            let n = counts[w][c];
            cells.push(HeatmapCell {
                window: w,
                start: w as u64 * window,
                cluster: c,
                selections: n,
                share: if total == 0 { 0.0 } else { n as f64 / total as f64 },
                solve_rate: (n > 0).then(|| reward[w][c] / n as f64),
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trajectory_has_no_variation() {
        let traj = vec![vec![0.3, 0.6]; 50];
        assert!(measure_vt(&traj).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_jump_persists() {
        let mut traj = vec![vec![0.1, 0.2]; 10];
        for row in &mut traj[4..] {
            row[1] = 0.5;
        }
        let vt = measure_vt(&traj).unwrap();
        assert_eq!(vt[2], 0.0);
        assert!(vt[3..].iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn too_short_trajectory_is_rejected() {
        assert!(measure_vt(&[vec![0.5]]).is_err());
    }

    #[test]
    fn heatmap_from_log() {
        let rec = |t, cluster, r_avg| DecisionRecord {
            t,
            cluster,
            r_avg,
            rewards: vec![],
            pulls: vec![],
        };
        let log = vec![rec(0, 0, 1.0), rec(1, 1, 0.5), rec(2, 1, 0.0), rec(3, 0, 0.25)];
        let cells = heatmap_from_decisions(&log, 2, 2).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[0].selections, cells[0].solve_rate), (1, Some(1.0)));
        assert_eq!((cells[1].selections, cells[1].share), (1, 0.5));
        assert_eq!(cells[3].solve_rate, Some(0.0));
        assert_eq!(cells[2].solve_rate, Some(0.25));
        assert!(heatmap_from_decisions(&log, 1, 2).is_err());
    }
}
