use std::collections::BTreeMap;

use serde::Serialize;

use curricula_core::reduction::ReducedSet;

use crate::protocol::{parse_request, validate_session_id, Ack, ErrorCode, ErrorResponse, Request};
use crate::session::Session;
use crate::{Result, ServiceError, SessionConfig};

/// Response to one request line.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub line: String,
    /// Set after an accepted `shutdown`; the transport should close.
    pub shutdown: bool,
}

/// All sessions of one process.
pub struct Service {
    config: SessionConfig,
    manifest: ReducedSet,
    sessions: BTreeMap<String, Session>,
    accepted_reports: u64,
}

impl Service {
    pub fn new(config: SessionConfig) -> Result<Self> {
        let manifest = ReducedSet::load(&config.manifest)?;
        Service::with_manifest(config, manifest)
    }

    pub fn with_manifest(config: SessionConfig, manifest: ReducedSet) -> Result<Self> {
        config.validate()?;
        manifest.validate()?;
        if let Some(k) = manifest.clusters.iter().position(Vec::is_empty) {
            return Err(ServiceError::Config(format!("manifest cluster {k} is empty")));
        }
        if let Some(dir) = &config.state_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Service {
            config,
            manifest,
            sessions: BTreeMap::new(),
            accepted_reports: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Reports accepted since this process started, over all sessions.
    pub fn accepted_reports(&self) -> u64 {
        self.accepted_reports
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        let request = match parse_request(line) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("rejected request: {}", e.message);
                return reply(&e);
            }
        };
        match request {
            Request::Shutdown => {
                if let Err(e) = self.checkpoint_all() {
                    return reply(&ErrorResponse::new(ErrorCode::CheckpointFailed, e.to_string()));
                }
                Reply {
                    line: to_line(&Ack { ok: true }),
                    shutdown: true,
                }
            }
            Request::NextBatch { session } => match self.session(&session) {
                Ok(s) => respond(s.next_batch()),
                Err(e) => reply(&e),
            },
            Request::Report { session, step, r_avg } => match self.session(&session) {
                Ok(s) => {
                    let out = s.report(step, r_avg);
                    if out.is_ok() {
                        self.accepted_reports += 1;
                    }
                    respond(out.map(|()| Ack { ok: true }))
                }
                Err(e) => reply(&e),
            },
            Request::State { session } => match self.session(&session) {
                Ok(s) => reply(&s.state()),
                Err(e) => reply(&e),
            },
            Request::Peek { session } => match self.session(&session) {
                Ok(s) => reply(&s.peek()),
                Err(e) => reply(&e),
            },
        }
    }

    /// Writes a checkpoint for every open session.
    pub fn checkpoint_all(&mut self) -> Result<()> {
        for session in self.sessions.values_mut() {
            session.checkpoint()?;
        }
        Ok(())
    }

    fn session(&mut self, id: &str) -> std::result::Result<&mut Session, ErrorResponse> {
        validate_session_id(id)?;
        if !self.sessions.contains_key(id) {
            let session = Session::open(id, &self.config, &self.manifest).map_err(|e| {
                ErrorResponse::new(ErrorCode::SessionUnavailable, format!("cannot open session `{id}`: {e}"))
            })?;
            log::info!("session {id} opened");
            self.sessions.insert(id.to_string(), session);
        }
        Ok(self.sessions.get_mut(id).expect("session was just inserted"))
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("responses serialize")
}

fn reply<T: Serialize>(value: &T) -> Reply {
    Reply {
        line: to_line(value),
        shutdown: false,
    }
}

fn respond<T: Serialize>(out: std::result::Result<T, ErrorResponse>) -> Reply {
    match out {
        Ok(v) => reply(&v),
        Err(e) => reply(&e),
    }
}
