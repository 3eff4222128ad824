use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Result, ServiceError};

/// Environment variable that overrides the configured transport.
pub const TRANSPORT_ENV: &str = "CURRICULA_TRANSPORT";

/// Settings shared by every session of one service process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Reduced-set manifest the sessions schedule over.
    pub manifest: PathBuf,
    pub batch_size: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Directory for per-session checkpoints and decision logs. Without it
    /// sessions live in memory only.
    pub state_dir: Option<PathBuf>,
    /// Checkpoint after this many accepted reports; 0 checkpoints only on
    /// shutdown.
    pub checkpoint_interval: u64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ServiceError::Config("batch_size must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ServiceError::Config("epsilon must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    /// `host:port` to listen on.
    Tcp(String),
}

impl Transport {
    /// The transport named by [`TRANSPORT_ENV`], if set, else `configured`.
    pub fn from_env_or(configured: Transport) -> Result<Transport> {
        match std::env::var(TRANSPORT_ENV) {
            Ok(v) if !v.trim().is_empty() => v.parse(),
            _ => Ok(configured),
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Stdio => f.write_str("stdio"),
            Transport::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

impl FromStr for Transport {
    type Err = ServiceError;

    /// Accepts `stdio` or `tcp:HOST:PORT`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "stdio" {
            return Ok(Transport::Stdio);
        }
        match s.strip_prefix("tcp:") {
            Some(addr) if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) => {
                Ok(Transport::Tcp(addr.to_string()))
            }
            _ => Err(ServiceError::Config(format!(
                "transport `{s}` is neither `stdio` nor `tcp:HOST:PORT`"
            ))),
        }
    }
}

impl Serialize for Transport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Transport {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServeConfig {
    pub session: SessionConfig,
    pub transport: Transport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transport_parsing() {
        assert_eq!("stdio".parse::<Transport>().unwrap(), Transport::Stdio);
        assert_eq!(
            "tcp:127.0.0.1:7070".parse::<Transport>().unwrap(),
            Transport::Tcp("127.0.0.1:7070".into())
        );
        assert_eq!(Transport::Tcp("localhost:1".into()).to_string(), "tcp:localhost:1");
        for bad in ["tcp", "tcp:host", "tcp::80", "tcp:host:99999", "udp:x:1"] {
            assert!(bad.parse::<Transport>().is_err(), "{bad}");
        }
    }
}
