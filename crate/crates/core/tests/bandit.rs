use curricula_core::reduction::ReducedSet;
use curricula_core::reduction::Strategy;
use curricula_core::scheduler::{load_checkpoint, save_checkpoint, BanditState, Checkpoint, Scheduler};
use curricula_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ledger_matches_replayed_sums() {
    let mut state = BanditState::new(7, 1e-6, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut log = Vec::new();
    for _ in 0..10_000 {
        let arm = rng.random_range(0..7);
        let r: f64 = rng.random();
        state.update(arm, r).unwrap();
        log.push((arm, r));
    }
    assert_eq!(state.pulls().iter().sum::<u64>(), 10_000);
    assert_eq!(state.step(), 10_000);
    for k in 0..7 {
        let replay = log.iter().filter(|(a, _)| *a == k).fold(0.0, |s, (_, r)| s + r);
        assert_eq!(state.rewards()[k], replay);
        assert_eq!(state.pulls()[k], log.iter().filter(|(a, _)| *a == k).count() as u64);
    }
}

#[test]
fn every_arm_is_explored_early() {
    let k = 7;
    let mut explored = 0;
    for seed in 0..1000u64 {
        let mut state = BanditState::new(k, 1e-6, seed).unwrap();
        let mut rewards = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 << 40));
        let mut seen = vec![false; k];
        for _ in 0..50 {
            let c = state.select_cluster();
            seen[c] = true;
            state.update(c, rewards.random()).unwrap();
        }
        if seen.iter().all(|&s| s) {
            explored += 1;
        }
    }
    assert!(explored as f64 / 1000.0 >= 0.999, "{explored}/1000");
}

fn selection_counts(rewards: Vec<f64>, pulls: Vec<u64>, seed: u64, draws: usize) -> Vec<f64> {
    let mut state = BanditState::from_parts(rewards, pulls, 1e-6, seed).unwrap();
    let mut counts = vec![0.0; state.k()];
    for _ in 0..draws {
        counts[state.select_cluster()] += 1.0;
    }
    counts
}

#[test]
fn shifting_every_mean_leaves_selection_unchanged() {
    let pulls = vec![3, 4, 5];
    let rewards = vec![1.5, 2.2, 2.4];
    let shift = 0.3;
    let shifted: Vec<f64> = rewards
        .iter()
        .zip(&pulls)
        .map(|(r, &n)| r + shift * (n as f64 + 1e-6))
        .collect();
    let a = selection_counts(rewards, pulls.clone(), 1, 10_000);
    let b = selection_counts(shifted, pulls, 2, 10_000);

    // chi-squared homogeneity test on the 2 × 3 table, df = 2, p = 0.001
    let total = 20_000.0;
    let mut chi2 = 0.0;
    for c in 0..3 {
        let col = a[c] + b[c];
        for row in [&a, &b] {
            let expected = 10_000.0 * col / total;
            chi2 += (row[c] - expected).powi(2) / expected;
        }
    }
    assert!(a.iter().all(|&x| x > 500.0), "{a:?}");
    assert!(chi2 < 13.816, "chi2 = {chi2}, {a:?} vs {b:?}");
}

#[test]
fn stationary_easy_hard_pair_concentrates_on_hard_arm() {
    for seed in 0..5u64 {
        let mut state = BanditState::new(2, 1e-6, seed).unwrap();
        let mut env = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        let rates = [0.9, 0.1];
        let mut tail_hard = 0;
        for t in 0..10_000 {
            let c = state.select_cluster();
            let hits = (0..8).filter(|_| env.random_bool(rates[c])).count();
            state.update(c, hits as f64 / 8.0).unwrap();
            if t >= 9_000 && c == 1 {
                tail_hard += 1;
            }
        }
        assert!(tail_hard >= 950, "seed {seed}: {tail_hard}");
    }
}

fn manifest(k: usize, per: usize) -> ReducedSet {
    ReducedSet {
        strategy: Strategy::Diverse,
        l: per,
        seed: None,
        clusters: (0..k).map(|c| (0..per).map(|i| format!("c{c}-{i}")).collect()).collect(),
    }
}

fn drive(sched: &mut Scheduler, n: usize) -> Vec<(usize, Vec<String>)> {
    (0..n)
        .map(|_| {
            let req = sched.next_batch().unwrap();
            let r = ((req.step as usize * 7 + req.cluster) % 9) as f64 / 8.0;
            sched.report(&req, r.min(1.0)).unwrap();
            (req.cluster, req.ids)
        })
        .collect()
}

#[test]
fn scheduler_resumes_from_file_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bandit.ckpt");
    let fresh = || Scheduler::new(BanditState::new(5, 1e-6, 8).unwrap(), manifest(5, 10), 8).unwrap();
    let expected = drive(&mut fresh(), 60);

    let mut first = fresh();
    let mut got = drive(&mut first, 25);
    save_checkpoint(first.state(), &path).unwrap();
    drop(first);
    let mut resumed = Scheduler::new(load_checkpoint(&path).unwrap(), manifest(5, 10), 8).unwrap();
    got.extend(drive(&mut resumed, 35));
    assert_eq!(got, expected);
}

#[test]
fn version_mismatch_is_reported() {
    let mut ckpt = BanditState::new(2, 1e-6, 0).unwrap().checkpoint();
    ckpt.version = 99;
    match Checkpoint::from_bytes(&ckpt.to_bytes()) {
        Err(Error::VersionMismatch { found: 99, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}
