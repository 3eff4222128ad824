//! Thompson-sampling bandit over clusters.
//!
//! Each arm keeps a cumulative solve rate `R_k` and a pull count `n_k`. A
//! selection draws one sample per arm from
//! `Normal(-R_k / (n_k + ε), 1 / (n_k + ε))` and takes the argmax, so arms the
//! learner fails on (low solve rate) and rarely-tried arms win. Rewards are
//! stored as raw solve rates; the negation lives only in the posterior mean.
//!
//! All randomness (posterior draws and batch sampling) comes from a single
//! seeded ChaCha stream owned by [`BanditState`], which checkpoints exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::reduction::ReducedSet;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct BanditState {
    rewards: Vec<f64>,
    pulls: Vec<u64>,
    epsilon: f64,
    step: u64,
    rng: ChaCha8Rng,
}

impl BanditState {
    pub fn new(k: usize, epsilon: f64, seed: u64) -> Result<Self> {
        Self::from_parts(vec![0.0; k], vec![0; k], epsilon, seed)
    }

    /// A state with pre-existing statistics; `step` is `Σ n_k`.
    pub fn from_parts(rewards: Vec<f64>, pulls: Vec<u64>, epsilon: f64, seed: u64) -> Result<Self> {
        let state = BanditState {
            step: pulls.iter().sum(),
            rewards,
            pulls,
            epsilon,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(Error::invalid("a bandit needs at least one arm"));
        }
        if self.rewards.len() != self.pulls.len() {
            return Err(Error::DimensionMismatch {
                expected: self.rewards.len(),
                found: self.pulls.len(),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (k, (&r, &n)) in self.rewards.iter().zip(&self.pulls).enumerate() {
            if !(r >= 0.0 && r <= n as f64) {
                return Err(Error::invalid(format!(
                    "arm {k}: cumulative reward {r} must lie in [0, n = {n}]"
                )));
            }
        }
        if self.pulls.iter().sum::<u64>() != self.step {
            return Err(Error::invalid("pull counts do not sum to the step count"));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.rewards.len()
    }

    /// Cumulative solve rate per arm.
    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn posterior_mean(&self, k: usize) -> f64 {
        -self.rewards[k] / (self.pulls[k] as f64 + self.epsilon)
    }

    pub fn posterior_variance(&self, k: usize) -> f64 {
        1.0 / (self.pulls[k] as f64 + self.epsilon)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// One posterior draw per arm, in arm order.
    pub fn sample_posteriors(&mut self) -> Vec<f64> {
        (0..self.k())
            .map(|k| {
                let z: f64 = self.rng.sample(StandardNormal);
                self.posterior_mean(k) + self.posterior_variance(k).sqrt() * z
            })
            .collect()
    }

    /// Argmax of one round of posterior draws; ties go to the lowest arm.
    pub fn select_cluster(&mut self) -> usize {
        argmax(&self.sample_posteriors())
    }

    /// Records the batch-average solve rate for arm `c`.
    pub fn update(&mut self, c: usize, r_avg: f64) -> Result<()> {
        if c >= self.k() {
            return Err(Error::invalid(format!("arm {c} out of range (k = {})", self.k())));
        }
        if !(0.0..=1.0).contains(&r_avg) {
            return Err(Error::invalid(format!("average reward {r_avg} outside [0, 1]")));
        }
        self.rewards[c] += r_avg;
        self.pulls[c] += 1;
        self.step += 1;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            k: self.k(),
            rewards: self.rewards.clone(),
            pulls: self.pulls.clone(),
            epsilon: self.epsilon,
            step: self.step,
            rng: self.rng.clone(),
        }
    }

    pub fn restore(checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: checkpoint.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if checkpoint.rewards.len() != checkpoint.k {
            return Err(Error::CorruptArtifact("arm count does not match k".into()));
        }
        let state = BanditState {
            rewards: checkpoint.rewards,
            pulls: checkpoint.pulls,
            epsilon: checkpoint.epsilon,
            step: checkpoint.step,
            rng: checkpoint.rng,
        };
        state
            .validate()
            .map_err(|e| Error::CorruptArtifact(format!("inconsistent bandit checkpoint: {e}")))?;
        Ok(state)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Serialized bandit state, including the generator position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub k: usize,
    #[serde(rename = "R")]
    pub rewards: Vec<f64>,
    #[serde(rename = "n")]
    pub pulls: Vec<u64>,
    pub epsilon: f64,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("checkpoint serializes");
        out.push(b'\n');
        out
    }

    /// Parses a checkpoint, checking the format version before the payload.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptArtifact(format!("checkpoint: {e}")))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptArtifact("checkpoint has no version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| Error::CorruptArtifact(format!("checkpoint: {e}")))
    }
}

/// Mean of per-example correctness bits.
pub fn average_reward(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::invalid("cannot average an empty batch"));
    }
    let correct = bits.iter().filter(|&&b| b).count();
    Ok(correct as f64 / bits.len() as f64)
}

/// Draws `batch_size` ids from one cluster's list: without replacement when
/// the list is large enough, otherwise the whole list (shuffled) topped up
/// with uniform draws.
pub fn draw_batch<R: Rng + ?Sized>(ids: &[String], batch_size: usize, rng: &mut R) -> Result<Vec<String>> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot draw a batch from an empty cluster"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if ids.len() >= batch_size {
        return Ok(rand::seq::index::sample(rng, ids.len(), batch_size)
            .into_iter()
            .map(|i| ids[i].clone())
            .collect());
    }
    let mut batch: Vec<String> = rand::seq::index::sample(rng, ids.len(), ids.len())
        .into_iter()
        .map(|i| ids[i].clone())
        .collect();
    while batch.len() < batch_size {
        batch.push(ids[rng.random_range(0..ids.len())].clone());
    }
    Ok(batch)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub step: u64,
    pub cluster: usize,
    pub ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub bits: Vec<bool>,
    pub r_avg: f64,
}

impl BatchResult {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        let r_avg = average_reward(&bits)?;
        Ok(BatchResult { bits, r_avg })
    }
}

/// One line of the decision log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: u64,
    pub cluster: usize,
    pub r_avg: f64,
    #[serde(rename = "R")]
    pub rewards: Vec<f64>,
    #[serde(rename = "n")]
    pub pulls: Vec<u64>,
}

impl DecisionRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("decision record serializes")
    }
}

/// Bandit plus the reduced set it schedules over.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheduler {
    state: BanditState,
    reduced: ReducedSet,
    batch_size: usize,
}

impl Scheduler {
    pub fn new(state: BanditState, reduced: ReducedSet, batch_size: usize) -> Result<Self> {
        reduced.validate()?;
        if state.k() != reduced.k() {
            return Err(Error::invalid(format!(
                "bandit has {} arms but the manifest has {} clusters",
                state.k(),
                reduced.k()
            )));
        }
        if let Some(k) = reduced.clusters.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("manifest cluster {k} is empty")));
        }
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(Scheduler {
            state,
            reduced,
            batch_size,
        })
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    pub fn reduced(&self) -> &ReducedSet {
        &self.reduced
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Selects an arm and samples its batch. Does not advance the step.
    pub fn next_batch(&mut self) -> Result<BatchRequest> {
        let cluster = self.state.select_cluster();
        let ids = draw_batch(self.reduced.cluster(cluster), self.batch_size, self.state.rng_mut())?;
        Ok(BatchRequest {
            step: self.state.step(),
            cluster,
            ids,
        })
    }

    pub fn report(&mut self, request: &BatchRequest, r_avg: f64) -> Result<DecisionRecord> {
        if request.step != self.state.step() {
            return Err(Error::invalid(format!(
                "report for step {} but the scheduler is at step {}",
                request.step,
                self.state.step()
            )));
        }
        self.state.update(request.cluster, r_avg)?;
        Ok(DecisionRecord {
            t: request.step,
            cluster: request.cluster,
            r_avg,
            rewards: self.state.rewards().to_vec(),
            pulls: self.state.pulls().to_vec(),
        })
    }

    pub fn into_state(self) -> BanditState {
        self.state
    }
}

pub fn save_checkpoint(state: &BanditState, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&state.checkpoint().to_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BanditState> {
    BanditState::restore(Checkpoint::from_bytes(&std::fs::read(path)?)?)
}
