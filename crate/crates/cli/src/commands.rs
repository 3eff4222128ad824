//! One function per subcommand. Each reads its inputs from and writes its
//! artifacts to the configured work directory.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use curricula_core::clustering::{kmeans, ClusterModel};
use curricula_core::corpus::{annotate_from_file, load_corpus, write_corpus};
use curricula_core::features::{featurize as fit_features, FeatureMatrix};
use curricula_core::reduction::{reduce as reduce_clusters, ReducedSet};
use curricula_core::scheduler::DecisionRecord;
use curricula_core::sim::{
    compare_schedulers, heatmap_from_decisions, run_episode, synthetic_reduced_set, DriftingLearner, EpisodeSettings,
    HeatmapCell, RunMetrics,
};
use curricula_core::Scalar;
use curricula_service::{ServeConfig, SessionConfig, Transport};

use crate::config::{Config, Precision};

pub const ANNOTATED: &str = "annotated.jsonl";
pub const FEATURES: &str = "features.json";
pub const PCA: &str = "pca.json";
pub const STANDARDIZER: &str = "standardizer.json";
pub const CLUSTERS: &str = "clusters.json";
pub const MANIFEST: &str = "manifest.json";
pub const SIM_DIR: &str = "sim";

fn prepare(config: &Config) -> Result<()> {
    fs::create_dir_all(&config.work_dir)
        .with_context(|| format!("creating work directory {}", config.work_dir.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Attaches difficulty scores from the attempts log to the corpus.
pub fn score(config: &Config) -> Result<PathBuf> {
    prepare(config)?;
    let corpus_path = config.corpus.path.as_ref().context("score needs corpus.path")?;
    let attempts = config.corpus.attempts.as_ref().context("score needs corpus.attempts")?;
    let corpus = load_corpus(corpus_path).with_context(|| format!("loading {}", corpus_path.display()))?;
    let annotation = annotate_from_file(corpus, attempts)?;
    let out = config.path(ANNOTATED);
    write_corpus(&annotation.corpus, &out)?;
    log::info!(
        "scored {} examples ({} unknown ids in the attempts log)",
        annotation.corpus.len(),
        annotation.warnings.len()
    );
    Ok(out)
}

/// Fits PCA and the standardizer, then writes the fused feature matrix.
pub fn featurize(config: &Config) -> Result<()> {
    prepare(config)?;
    let annotated = config.path(ANNOTATED);
    let input = if annotated.exists() {
        annotated
    } else {
        config
            .corpus
            .path
            .clone()
            .context("no annotated corpus in the work directory and no corpus.path; run `score` first")?
    };
    let corpus = load_corpus(&input).with_context(|| format!("loading {}", input.display()))?;
    match config.features.precision {
        Precision::F64 => featurize_as::<f64>(config, &corpus),
        Precision::F32 => featurize_as::<f32>(config, &corpus),
    }
}

fn featurize_as<T: Scalar>(config: &Config, corpus: &curricula_core::corpus::Corpus) -> Result<()> {
    let fitted = fit_features::<T>(corpus, config.features.components)?;
    fitted.features.save(config.path(FEATURES))?;
    write_json(&fitted.pca, &config.path(PCA))?;
    write_json(&fitted.standardizer, &config.path(STANDARDIZER))?;
    log::info!(
        "featurized {} examples into {} dimensions",
        fitted.features.len(),
        fitted.features.dim()
    );
    Ok(())
}

pub fn cluster(config: &Config, seed: u64) -> Result<()> {
    prepare(config)?;
    match config.features.precision {
        Precision::F64 => cluster_as::<f64>(config, seed),
        Precision::F32 => cluster_as::<f32>(config, seed),
    }
}

fn cluster_as<T: Scalar>(config: &Config, seed: u64) -> Result<()> {
    let features = load_features::<T>(config)?;
    let model = kmeans(&features, config.clustering.kmeans(seed))?;
    model.save(config.path(CLUSTERS))?;
    log::info!(
        "k-means: {} clusters, inertia {} after {} iterations",
        model.k(),
        model.inertia,
        model.iterations
    );
    Ok(())
}

fn load_features<T: Scalar>(config: &Config) -> Result<FeatureMatrix<T>> {
    let path = config.path(FEATURES);
    ensure!(path.exists(), "{} not found; run `featurize` first", path.display());
    Ok(FeatureMatrix::load(&path)?)
}

pub fn reduce(config: &Config, seed: u64) -> Result<ReducedSet> {
    prepare(config)?;
    match config.features.precision {
        Precision::F64 => reduce_as::<f64>(config, seed),
        Precision::F32 => reduce_as::<f32>(config, seed),
    }
}

fn reduce_as<T: Scalar>(config: &Config, seed: u64) -> Result<ReducedSet> {
    let features = load_features::<T>(config)?;
    let path = config.path(CLUSTERS);
    ensure!(path.exists(), "{} not found; run `cluster` first", path.display());
    let model = ClusterModel::<T>::load(&path)?;
    let set = reduce_clusters(
        &features,
        &model,
        config.reduction.strategy,
        config.reduction.per_cluster,
        seed,
    )?;
    set.save(config.path(MANIFEST))?;
    log::info!("kept {} examples over {} clusters", set.total(), set.k());
    Ok(set)
}

fn simulation_manifest(config: &Config) -> Result<ReducedSet> {
    let arms = config.simulation.initial.len();
    let explicit = config.simulation.manifest.clone();
    let pipeline = config.path(MANIFEST);
    let path = match explicit {
        Some(p) => Some(p),
        None if pipeline.exists() => Some(pipeline),
        None => None,
    };
    let Some(path) = path else {
        return Ok(synthetic_reduced_set(arms, config.simulation.synthetic_per_cluster));
    };
    let set = ReducedSet::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if set.k() != arms {
        bail!(
            "{} has {} clusters but simulation.initial describes {arms}; adjust simulation.initial and simulation.gains",
            path.display(),
            set.k()
        );
    }
    Ok(set)
}

/// Paths written by [`simulate`].
#[derive(Debug)]
pub struct SimulationOutput {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub heatmap: PathBuf,
    pub comparison: Option<PathBuf>,
    pub runs: Vec<RunMetrics>,
}

pub fn simulate(config: &Config, seed: u64) -> Result<SimulationOutput> {
    prepare(config)?;
    let sim = &config.simulation;
    let reduced = simulation_manifest(config)?;
    let learner = sim.learner();
    let dir = config.path(SIM_DIR);
    fs::create_dir_all(dir.join("decisions"))?;
    let seeds: Vec<u64> = (0..sim.replicates).map(|i| seed.wrapping_add(i)).collect();

    let mut runs = Vec::new();
    for &policy in &sim.policies {
        for &s in &seeds {
            let settings = EpisodeSettings {
                policy,
                epsilon: config.scheduler.epsilon,
                batch_size: config.scheduler.batch_size,
                steps: sim.steps,
                window: sim.window,
                seed: s,
            };
            let mut l = DriftingLearner::new(&learner)?;
            let episode = run_episode(&settings, &mut l, &reduced)?;
            let log_path = dir.join("decisions").join(format!("{policy}-{s}.jsonl"));
            let mut w = BufWriter::new(File::create(&log_path)?);
            for d in &episode.decisions {
                writeln!(w, "{}", d.to_line())?;
            }
            w.flush()?;
            runs.push(episode.metrics);
        }
    }

    let metrics = dir.join("metrics.jsonl");
    let mut w = BufWriter::new(File::create(&metrics)?);
    for run in &runs {
        writeln!(w, "{}", serde_json::to_string(run)?)?;
    }
    w.flush()?;

    let k = reduced.k();
    let summary = dir.join("summary.csv");
    let mut w = BufWriter::new(File::create(&summary)?);
    writeln!(w, "{}", RunMetrics::summary_csv_header(k))?;
    for run in &runs {
        writeln!(w, "{}", run.summary_csv_row())?;
    }
    w.flush()?;

    let heatmap = dir.join("heatmap.csv");
    let mut w = BufWriter::new(File::create(&heatmap)?);
    writeln!(w, "policy,seed,{}", HeatmapCell::csv_header())?;
    for run in &runs {
        for cell in run.heatmap() {
            writeln!(w, "{},{},{}", run.policy, run.seed, cell.csv_row())?;
        }
    }
    w.flush()?;

    let comparison = if sim.policies.len() > 1 {
        let base = EpisodeSettings {
            epsilon: config.scheduler.epsilon,
            batch_size: config.scheduler.batch_size,
            steps: sim.steps,
            window: sim.window,
            ..EpisodeSettings::default()
        };
        let report = compare_schedulers(&sim.policies, &learner, &reduced, &base, &seeds)?;
        let path = dir.join("comparison.json");
        write_json(&report, &path)?;
        Some(path)
    } else {
        None
    };
    log::info!("simulated {} episodes of {} steps", runs.len(), sim.steps);
    Ok(SimulationOutput {
        metrics,
        summary,
        heatmap,
        comparison,
        runs,
    })
}

pub fn serve(config: &Config, seed: u64) -> Result<()> {
    let manifest = config.service.manifest.clone().unwrap_or_else(|| config.path(MANIFEST));
    ensure!(
        manifest.exists(),
        "{} not found; run `reduce` first or set service.manifest",
        manifest.display()
    );
    let transport = Transport::from_env_or(config.service.transport.clone())?;
    let serve_config = ServeConfig {
        session: SessionConfig {
            manifest,
            batch_size: config.scheduler.batch_size,
            epsilon: config.scheduler.epsilon,
            seed,
            state_dir: Some(config.service.state_dir.clone().unwrap_or_else(|| config.path("service"))),
            checkpoint_interval: config.service.checkpoint_interval,
        },
        transport,
    };
    log::info!("serving on {}", serve_config.transport);
    curricula_service::transport::serve(serve_config)?;
    Ok(())
}

/// Rebuilds heatmap data from a decision log.
pub fn replay(log_path: &Path, window: u64, out: &Path) -> Result<usize> {
    let reader = BufReader::new(File::open(log_path).with_context(|| format!("opening {}", log_path.display()))?);
    let mut decisions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DecisionRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: not a decision record", log_path.display(), i + 1))?;
        decisions.push(record);
    }
    let Some(first) = decisions.first() else {
        bail!("{} holds no decisions", log_path.display());
    };
    let k = first.pulls.len();
    let cells = heatmap_from_decisions(&decisions, k, window)?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    writeln!(w, "{}", HeatmapCell::csv_header())?;
    for cell in &cells {
        writeln!(w, "{}", cell.csv_row())?;
    }
    w.flush()?;
    Ok(decisions.len())
}
