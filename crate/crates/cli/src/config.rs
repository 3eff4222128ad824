//! Pipeline configuration: one TOML document whose sections mirror the
//! library defaults, plus `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use curricula_core::clustering::KMeansConfig;
use curricula_core::features::DEFAULT_PCA_COMPONENTS;
use curricula_core::reduction::{Strategy, DEFAULT_PER_CLUSTER};
use curricula_core::scheduler::{DEFAULT_BATCH_SIZE, DEFAULT_EPSILON};
use curricula_core::sim::{DriftParams, LearnerConfig, LrSchedule, LrShape, Policy};
use curricula_service::Transport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory that receives every artifact.
    pub work_dir: PathBuf,
    pub corpus: CorpusSection,
    pub features: FeaturesSection,
    pub clustering: ClusteringSection,
    pub reduction: ReductionSection,
    pub scheduler: SchedulerSection,
    pub simulation: SimulationSection,
    pub service: ServiceSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            work_dir: PathBuf::from("work"),
            corpus: CorpusSection::default(),
            features: FeaturesSection::default(),
            clustering: ClusteringSection::default(),
            reduction: ReductionSection::default(),
            scheduler: SchedulerSection::default(),
            simulation: SimulationSection::default(),
            service: ServiceSection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// JSONL corpus: `{"id", "embedding", "meta"?, "difficulty"?}` per line.
    pub path: Option<PathBuf>,
    /// JSONL attempts log: `{"id", "attempts", "successes"}` per line.
    pub attempts: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub components: usize,
    pub precision: Precision,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            components: DEFAULT_PCA_COMPONENTS,
            precision: Precision::F64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        let d = KMeansConfig::default();
        ClusteringSection {
            k: d.k,
            max_iters: d.max_iters,
            tol: d.tol,
        }
    }
}

impl ClusteringSection {
    pub fn kmeans(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionSection {
    pub strategy: Strategy,
    pub per_cluster: usize,
}

impl Default for ReductionSection {
    fn default() -> Self {
        ReductionSection {
            strategy: Strategy::Diverse,
            per_cluster: DEFAULT_PER_CLUSTER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub batch_size: usize,
    pub epsilon: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        SchedulerSection {
            batch_size: DEFAULT_BATCH_SIZE,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// One episode per policy per seed; more than one policy also writes a
    /// comparison report.
    pub policies: Vec<Policy>,
    /// Episodes per policy, seeded `seed, seed + 1, ...`.
    pub replicates: u64,
    pub steps: u64,
    pub window: u64,
    /// Initial true solve rate of each cluster.
    pub initial: Vec<f64>,
    /// Learning gain of each cluster.
    pub gains: Vec<f64>,
    pub h: f64,
    pub g_max: f64,
    pub spillover: f64,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub lr_shape: LrShape,
    /// Manifest to schedule over. Defaults to the pipeline's manifest when it
    /// exists, otherwise to synthetic ids.
    pub manifest: Option<PathBuf>,
    /// Ids per cluster of the synthetic manifest.
    pub synthetic_per_cluster: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let drift = DriftParams::default();
        SimulationSection {
            policies: vec![Policy::Thompson],
            replicates: 1,
            steps: 1_200,
            window: 200,
            // two hard clusters that improve fastest, one easy flat cluster,
            // one mid cluster that never improves
            initial: vec![0.45, 0.2, 0.22, 0.7, 0.5, 0.55, 0.6],
            gains: vec![0.0, 0.02, 0.02, 0.0, 0.005, 0.005, 0.002],
            h: drift.h,
            g_max: drift.g_max,
            spillover: drift.spillover,
            base_lr: LrSchedule::SIM_BASE_LR,
            warmup_ratio: LrSchedule::DEFAULT_WARMUP_RATIO,
            lr_shape: LrShape::WarmupCosine,
            manifest: None,
            synthetic_per_cluster: DEFAULT_PER_CLUSTER,
        }
    }
}

impl SimulationSection {
    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig {
            initial: self.initial.clone(),
            gains: self.gains.clone(),
            drift: DriftParams {
                h: self.h,
                g_max: self.g_max,
                spillover: self.spillover,
            },
            schedule: LrSchedule {
                base_lr: self.base_lr,
                warmup_ratio: self.warmup_ratio,
                total_steps: self.steps,
                shape: self.lr_shape,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    /// `stdio` or `tcp:HOST:PORT`; the `CURRICULA_TRANSPORT` environment
    /// variable takes precedence.
    pub transport: Transport,
    /// Defaults to the pipeline's manifest.
    pub manifest: Option<PathBuf>,
    /// Defaults to `<work_dir>/service`.
    pub state_dir: Option<PathBuf>,
    pub checkpoint_interval: u64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            transport: Transport::Stdio,
            manifest: None,
            state_dir: None,
            checkpoint_interval: 10,
        }
    }
}

impl Config {
    /// Reads `path` (or starts from defaults) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut doc, item)?;
        }
        let config: Config = toml::Value::Table(doc)
            .try_into()
            .context("invalid configuration (see `curricula --help` for the sections)")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.components == 0 {
            bail!("features.components must be at least 1");
        }
        if self.clustering.k == 0 {
            bail!("clustering.k must be at least 1");
        }
        if self.reduction.per_cluster == 0 {
            bail!("reduction.per_cluster must be at least 1");
        }
        if self.scheduler.batch_size == 0 {
            bail!("scheduler.batch_size must be at least 1");
        }
        if self.scheduler.epsilon.is_nan() || self.scheduler.epsilon <= 0.0 {
            bail!("scheduler.epsilon must be positive");
        }
        let sim = &self.simulation;
        if sim.policies.is_empty() {
            bail!("simulation.policies must name at least one policy");
        }
        if sim.replicates == 0 {
            bail!("simulation.replicates must be at least 1");
        }
        sim.learner().validate().context("invalid [simulation] learner settings")?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }
}

/// Sets `section.key` (or a top-level `key`) from `KEY=VALUE`. The value is
/// read as TOML when possible and as a bare string otherwise.
fn apply_override(doc: &mut toml::Table, item: &str) -> Result<()> {
    let Some((key, raw)) = item.split_once('=') else {
        bail!("override `{item}` is not of the form section.key=value");
    };
    let key = key.trim();
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    match parts.as_slice() {
        [field] if !field.is_empty() => {
            doc.insert(field.to_string(), value);
        }
        [section, field] if !section.is_empty() && !field.is_empty() => {
            let entry = doc
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let Some(table) = entry.as_table_mut() else {
                bail!("`{section}` is not a section");
            };
            table.insert(field.to_string(), value);
        }
        _ => bail!("override key `{key}` must be `key` or `section.key`"),
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
