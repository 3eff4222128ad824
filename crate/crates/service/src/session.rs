use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use curricula_core::reduction::ReducedSet;
use curricula_core::scheduler::{BanditState, BatchRequest, Checkpoint, DecisionRecord, Scheduler};
use curricula_core::Error as CoreError;

use crate::protocol::{ErrorCode, ErrorResponse, PeekResponse, StateResponse};
use crate::{Result, SessionConfig};

pub const SESSION_CHECKPOINT_VERSION: u32 = 1;

/// On-disk session state: the bandit plus any batch issued but not yet
/// reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionCheckpoint {
    pub version: u32,
    pub session: String,
    pub bandit: Checkpoint,
    pub pending: Option<BatchRequest>,
}

impl SessionCheckpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| CoreError::CorruptArtifact(format!("{}: {e}", path.display())))?;
        let version = value.get("version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(SESSION_CHECKPOINT_VERSION)) {
            return Err(CoreError::VersionMismatch {
                found: version.and_then(|v| u32::try_from(v).ok()).unwrap_or(0),
                expected: SESSION_CHECKPOINT_VERSION,
            }
            .into());
        }
        Ok(serde_json::from_value(value).map_err(|e| CoreError::CorruptArtifact(format!("{}: {e}", path.display())))?)
    }

    /// Writes through a temporary file so a crash never leaves a torn
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            serde_json::to_writer(&mut f, self).map_err(std::io::Error::from)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub(crate) struct Session {
    id: String,
    scheduler: Scheduler,
    pending: Option<BatchRequest>,
    since_checkpoint: u64,
    interval: u64,
    checkpoint_path: Option<PathBuf>,
    log: Option<File>,
}

impl Session {
    /// Opens session `id`, resuming from its checkpoint when one exists.
    /// Decision-log lines past the checkpointed step are dropped so the log
    /// always agrees with the restored state.
    pub fn open(id: &str, config: &SessionConfig, manifest: &ReducedSet) -> Result<Self> {
        let (checkpoint_path, log_path) = match &config.state_dir {
            Some(dir) => (
                Some(dir.join(format!("{id}.checkpoint.json"))),
                Some(dir.join(format!("{id}.decisions.jsonl"))),
            ),
            None => (None, None),
        };
        let (state, pending) = match &checkpoint_path {
            Some(path) if path.exists() => {
                let ckpt = SessionCheckpoint::load(path)?;
                if ckpt.session != id {
                    return Err(CoreError::CorruptArtifact(format!(
                        "{} belongs to session `{}`",
                        path.display(),
                        ckpt.session
                    ))
                    .into());
                }
                log::info!("session {id}: resuming at step {}", ckpt.bandit.step);
                (BanditState::restore(ckpt.bandit)?, ckpt.pending)
            }
            _ => (BanditState::new(manifest.k(), config.epsilon, config.seed)?, None),
        };
        let log = match &log_path {
            Some(path) => Some(open_log(path, state.step())?),
            None => None,
        };
        Ok(Session {
            id: id.to_string(),
            scheduler: Scheduler::new(state, manifest.clone(), config.batch_size)?,
            pending,
            since_checkpoint: 0,
            interval: config.checkpoint_interval,
            checkpoint_path,
            log,
        })
    }

    pub fn next_batch(&mut self) -> std::result::Result<BatchRequest, ErrorResponse> {
        if let Some(p) = &self.pending {
            return Err(ErrorResponse::new(
                ErrorCode::PendingReport,
                format!("step {} has not been reported yet", p.step),
            ));
        }
        let req = self
            .scheduler
            .next_batch()
            .map_err(|e| ErrorResponse::new(ErrorCode::SessionUnavailable, e.to_string()))?;
        self.pending = Some(req.clone());
        Ok(req)
    }

    pub fn report(&mut self, step: u64, r_avg: f64) -> std::result::Result<(), ErrorResponse> {
        let current = self.scheduler.state().step();
        let pending = match &self.pending {
            Some(p) if p.step == step => p.clone(),
            _ if step < current => {
                return Err(ErrorResponse::new(
                    ErrorCode::AlreadyReported,
                    format!("step {step} was already reported"),
                ))
            }
            _ => {
                return Err(ErrorResponse::new(
                    ErrorCode::UnknownStep,
                    format!("step {step} was never issued"),
                ))
            }
        };
        if !(0.0..=1.0).contains(&r_avg) {
            return Err(ErrorResponse::new(
                ErrorCode::InvalidReward,
                format!("r_avg {r_avg} outside [0, 1]"),
            ));
        }
        let record = self
            .scheduler
            .report(&pending, r_avg)
            .map_err(|e| ErrorResponse::new(ErrorCode::InvalidReward, e.to_string()))?;
        self.pending = None;
        if let Err(e) = self.append_log(&record) {
            log::error!("session {}: decision log write failed: {e}", self.id);
        }
        self.since_checkpoint += 1;
        if self.interval > 0 && self.since_checkpoint >= self.interval {
            self.checkpoint()
                .map_err(|e| ErrorResponse::new(ErrorCode::CheckpointFailed, e.to_string()))?;
        }
        Ok(())
    }

    pub fn state(&self) -> StateResponse {
        let s = self.scheduler.state();
        StateResponse {
            rewards: s.rewards().to_vec(),
            pulls: s.pulls().to_vec(),
            step: s.step(),
        }
    }

    pub fn peek(&self) -> PeekResponse {
        PeekResponse {
            step: self.scheduler.state().step(),
            pending: self.pending.clone(),
        }
    }

    pub fn checkpoint(&mut self) -> Result<()> {
        if let Some(path) = &self.checkpoint_path {
            SessionCheckpoint {
                version: SESSION_CHECKPOINT_VERSION,
                session: self.id.clone(),
                bandit: self.scheduler.state().checkpoint(),
                pending: self.pending.clone(),
            }
            .save(path)?;
        }
        self.since_checkpoint = 0;
        Ok(())
    }

    fn append_log(&mut self, record: &DecisionRecord) -> std::io::Result<()> {
        if let Some(f) = &mut self.log {
            writeln!(f, "{}", record.to_line())?;
            f.flush()?;
        }
        Ok(())
    }
}

/// Keeps only log records from before `step`, then opens the log for append.
fn open_log(path: &Path, step: u64) -> Result<File> {
    if path.exists() {
        let mut kept = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            match serde_json::from_str::<DecisionRecord>(&line) {
                Ok(rec) if rec.t < step => kept.push(line),
                Ok(_) => {}
                Err(e) => log::warn!("{}: dropping unreadable log line: {e}", path.display()),
            }
        }
        let mut f = File::create(path)?;
        for line in kept {
            writeln!(f, "{line}")?;
        }
        f.sync_all()?;
    }
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}
