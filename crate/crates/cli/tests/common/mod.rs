#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_curricula"));
    cmd.env("RUST_LOG", "warn").env_remove("CURRICULA_TRANSPORT");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "curricula {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes a corpus of `n` examples drawn around a few topic centres, plus a
/// matching attempts log, and returns their paths.
pub fn write_corpus(dir: &Path, n: usize, dim: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut corpus = String::new();
    let mut attempts = String::new();
    for i in 0..n {
        let c = &centres[i % centres.len()];
        let emb: Vec<f64> = c.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        let emb: Vec<String> = emb.iter().map(|x| format!("{x}")).collect();
        writeln!(corpus, r#"{{"id":"q{i}","embedding":[{}],"meta":{{"topic":"t{}"}}}}"#, emb.join(","), i % 5).unwrap();
        let successes = rng.random_range(0..=128u32);
        writeln!(attempts, r#"{{"id":"q{i}","attempts":128,"successes":{successes}}}"#).unwrap();
    }
    let cp = dir.join("corpus.jsonl");
    let ap = dir.join("attempts.jsonl");
    std::fs::write(&cp, corpus).unwrap();
    std::fs::write(&ap, attempts).unwrap();
    (cp, ap)
}

/// Config file for a pipeline rooted at `dir`.
pub fn write_config(dir: &Path, corpus: &Path, attempts: &Path, extra: &str) -> PathBuf {
    let path = dir.join("curricula.toml");
    let text = format!(
        "work_dir = {work:?}\n\n[corpus]\npath = {corpus:?}\nattempts = {attempts:?}\n\n[features]\ncomponents = 8\n\n{extra}\n",
        work = dir.join("work"),
    );
    std::fs::write(&path, text).unwrap();
    path
}

/// Runs score → featurize → cluster → reduce → simulate.
pub fn run_pipeline(config: &Path, seed: u64) {
    let c = config.to_str().unwrap();
    let s = seed.to_string();
    run(&["--config", c, "score"]);
    run(&["--config", c, "featurize"]);
    run(&["--config", c, "cluster", "--seed", &s]);
    run(&["--config", c, "reduce", "--seed", &s]);
    run(&["--config", c, "simulate", "--seed", &s]);
}
