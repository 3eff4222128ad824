use curricula_core::sim::{
    compare_schedulers, measure_vt, run_episode, synthetic_reduced_set, DriftParams, DriftingLearner, EpisodeSettings,
    LearnerConfig, LrSchedule, Policy, StationaryLearner,
};

fn settings(policy: Policy, steps: u64, seed: u64) -> EpisodeSettings {
    EpisodeSettings {
        policy,
        steps,
        window: 1000,
        seed,
        ..EpisodeSettings::default()
    }
}

fn seven_arm_config(steps: u64) -> LearnerConfig {
    LearnerConfig {
        initial: vec![0.9, 0.8, 0.7, 0.55, 0.4, 0.2, 0.1],
        gains: vec![0.02, 0.05, 0.1, 0.3, 0.5, 0.8, 0.05],
        drift: DriftParams::default(),
        schedule: LrSchedule::cosine(steps),
    }
}

#[test]
fn cosine_schedule_sum_has_closed_form() {
    // warmup contributes α(w − 1)/2, the cosine tail α(M + 1)/2, total αT/2
    for steps in [10u64, 999, 2_000, 12_345] {
        let s = LrSchedule::cosine(steps);
        let summed: f64 = (0..steps).map(|t| s.rate(t)).sum();
        let closed = s.base_lr * steps as f64 / 2.0;
        assert!((summed - closed).abs() <= 1e-9 * closed, "{steps}: {summed} vs {closed}");
    }
}

#[test]
fn variation_is_bounded_by_schedule_sum() {
    let steps = 3_000;
    let config = seven_arm_config(steps);
    let reduced = synthetic_reduced_set(7, 10);
    for policy in Policy::ALL {
        let mut learner = DriftingLearner::new(&config).unwrap();
        let ep = run_episode(&settings(policy, steps, 4), &mut learner, &reduced).unwrap();
        let bound = config.drift.h * config.drift.g_max * config.schedule.base_lr * steps as f64 / 2.0;
        let vt = ep.metrics.final_vt();
        assert!(vt <= bound * (1.0 + 1e-9), "{policy}: {vt} > {bound}");
        assert!(vt / steps as f64 <= 1e-3);

        for (t, pair) in ep.metrics.trajectory.windows(2).enumerate() {
            let cap = learner.cap(t as u64);
            let drift = pair[0].iter().zip(&pair[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(drift <= cap + 1e-12);
        }
        let recomputed = measure_vt(&ep.metrics.trajectory).unwrap();
        for (a, b) in recomputed.iter().zip(&ep.metrics.vt) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn variation_per_step_vanishes_with_horizon() {
    let reduced = synthetic_reduced_set(7, 10);
    let mut ratios = Vec::new();
    for steps in [1_000u64, 4_000, 16_000] {
        let mut learner = DriftingLearner::new(&seven_arm_config(steps)).unwrap();
        let mut config = seven_arm_config(steps);
        config.gains = vec![1e-4; 7];
        let mut small = DriftingLearner::new(&config).unwrap();
        let ep = run_episode(&settings(Policy::Thompson, steps, 1), &mut learner, &reduced).unwrap();
        let ep_small = run_episode(&settings(Policy::Thompson, steps, 1), &mut small, &reduced).unwrap();
        // solve rates live in [0, 1], so total variation saturates
        ratios.push(ep.metrics.final_vt() / steps as f64);
        assert!(ep_small.metrics.final_vt() <= 1e-4 * 0.05 * steps as f64 / 2.0 * (1.0 + 1e-9));
    }
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn thompson_concentrates_once_drift_vanishes() {
    let steps = 20_000;
    let config = LearnerConfig {
        initial: vec![0.85, 0.15],
        gains: vec![2e-4, 2e-4],
        drift: DriftParams::default(),
        schedule: LrSchedule::cosine(steps),
    };
    let reduced = synthetic_reduced_set(2, 10);
    for seed in 0..20 {
        let mut learner = DriftingLearner::new(&config).unwrap();
        let ep = run_episode(&settings(Policy::Thompson, steps, seed), &mut learner, &reduced).unwrap();
        let traj = &ep.metrics.trajectory;
        let threshold = 1e-4 * config.schedule.base_lr;
        let start = (0..steps).find(|&t| t > 0 && config.schedule.rate(t) < threshold).unwrap() as usize;
        for end in start.max(999)..steps as usize {
            let window = &ep.decisions[end + 1 - 1000..=end];
            let gap = (traj[end][0] - traj[end][1]).abs();
            assert!(gap >= 0.3);
            let target = if traj[end][0] < traj[end][1] { 0 } else { 1 };
            let share = window.iter().filter(|d| d.cluster == target).count() as f64 / 1000.0;
            assert!(share >= 0.9, "seed {seed} step {end}: {share}");
        }
    }
}

#[test]
fn uniform_splits_evenly_and_thompson_beats_it() {
    let reduced = synthetic_reduced_set(2, 10);
    for seed in 0..20 {
        let mut a = StationaryLearner::new(vec![0.9, 0.1]).unwrap();
        let mut b = StationaryLearner::new(vec![0.9, 0.1]).unwrap();
        let u = run_episode(&settings(Policy::Uniform, 10_000, seed), &mut a, &reduced).unwrap();
        let t = run_episode(&settings(Policy::Thompson, 10_000, seed), &mut b, &reduced).unwrap();
        let share = u.decisions.iter().filter(|d| d.cluster == 1).count() as f64 / 10_000.0;
        assert!((share - 0.5).abs() <= 0.02, "seed {seed}: {share}");
        assert!(t.metrics.final_regret() < u.metrics.final_regret());
    }
}

#[test]
fn comparison_reports_every_policy_and_seed() {
    let config = seven_arm_config(1_000);
    let reduced = synthetic_reduced_set(7, 10);
    let base = settings(Policy::Thompson, 1_000, 0);
    let report = compare_schedulers(&Policy::ALL, &config, &reduced, &base, &[1, 2]).unwrap();
    assert_eq!(report.entries.len(), 8);
    let oracle = report.entry(Policy::Oracle, 2).unwrap();
    assert_eq!(oracle.final_regret, 0.0);
    for e in &report.entries {
        assert_eq!(e.selections.iter().flatten().sum::<u64>(), 1_000);
    }
}

#[test]
fn metrics_serialize_reproducibly() {
    let config = seven_arm_config(2_000);
    let reduced = synthetic_reduced_set(7, 10);
    let run = || {
        let mut learner = DriftingLearner::new(&config).unwrap();
        let ep = run_episode(&settings(Policy::Thompson, 2_000, 9), &mut learner, &reduced).unwrap();
        serde_json::to_vec(&ep.metrics).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn saturated_inverse_time_drift_is_harmonic() {
    // every step moves by the full cap c/(t + 1), so V_T = c · H_T and
    // V_T − c ln T tends to c times the Euler–Mascheroni constant
    let steps = 20_000u64;
    let drift = DriftParams::default();
    let config = LearnerConfig {
        initial: vec![0.1, 0.2],
        gains: vec![10.0, 10.0],
        drift,
        schedule: LrSchedule::inverse_time(0.05, steps),
    };
    let c = drift.h * drift.g_max * 0.05;
    let mut learner = DriftingLearner::new(&config).unwrap();
    let ep = run_episode(&settings(Policy::Thompson, steps, 2), &mut learner, &synthetic_reduced_set(2, 10)).unwrap();
    for t in [10usize, 1_000, 20_000] {
        let harmonic: f64 = (1..=t).map(|i| 1.0 / i as f64).sum();
        let vt = ep.metrics.vt[t - 1];
        assert!((vt - c * harmonic).abs() <= 1e-9 * c * harmonic, "t = {t}");
    }
    let gamma = 0.577_215_664_901_532_9;
    let excess = ep.metrics.final_vt() / c - (steps as f64).ln();
    assert!((excess - gamma).abs() < 1e-4, "{excess}");
}
