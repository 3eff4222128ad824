//! Wire format: one JSON object per line in each direction.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use curricula_core::scheduler::BatchRequest;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    NextBatch { session: String },
    Report { session: String, step: u64, r_avg: f64 },
    State { session: String },
    /// Reports the pending batch, if any, without drawing a new one.
    Peek { session: String },
    Shutdown,
}

const OPS: [&str; 5] = ["next_batch", "report", "state", "peek", "shutdown"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedRequest,
    UnknownOp,
    InvalidSession,
    PendingReport,
    UnknownStep,
    AlreadyReported,
    InvalidReward,
    SessionUnavailable,
    CheckpointFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorResponse {
    pub error: ErrorCode,
    pub message: String,
}

impl ErrorResponse {
    pub fn new(error: ErrorCode, message: impl Into<String>) -> Self {
        ErrorResponse {
            error,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ack {
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateResponse {
    #[serde(rename = "R")]
    pub rewards: Vec<f64>,
    #[serde(rename = "n")]
    pub pulls: Vec<u64>,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeekResponse {
    pub step: u64,
    pub pending: Option<BatchRequest>,
}

/// Parses one request line, separating unparseable input from unknown ops
/// and from known ops with bad fields.
pub fn parse_request(line: &str) -> Result<Request, ErrorResponse> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| ErrorResponse::new(ErrorCode::MalformedRequest, format!("not valid JSON: {e}")))?;
    let op = match value.get("op") {
        Some(Value::String(op)) => op.clone(),
        Some(_) => return Err(ErrorResponse::new(ErrorCode::MalformedRequest, "`op` must be a string")),
        None => return Err(ErrorResponse::new(ErrorCode::MalformedRequest, "request has no `op`")),
    };
    if !OPS.contains(&op.as_str()) {
        return Err(ErrorResponse::new(
            ErrorCode::UnknownOp,
            format!("unknown op `{op}`; expected one of {}", OPS.join(", ")),
        ));
    }
    serde_json::from_value(value)
        .map_err(|e| ErrorResponse::new(ErrorCode::MalformedRequest, format!("bad `{op}` request: {e}")))
}

/// Session ids name files on disk, so they are restricted to a safe alphabet.
pub fn validate_session_id(id: &str) -> Result<(), ErrorResponse> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(ErrorResponse::new(
            ErrorCode::InvalidSession,
            format!("session id `{id}` must be 1-64 characters of [A-Za-z0-9_-]"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_op() {
        assert_eq!(
            parse_request(r#"{"op":"next_batch","session":"a"}"#).unwrap(),
            Request::NextBatch { session: "a".into() }
        );
        assert_eq!(
            parse_request(r#"{"op":"report","session":"a","step":3,"r_avg":0.75}"#).unwrap(),
            Request::Report {
                session: "a".into(),
                step: 3,
                r_avg: 0.75
            }
        );
        assert_eq!(parse_request(r#"{"op":"shutdown"}"#).unwrap(), Request::Shutdown);
        assert!(matches!(parse_request(r#"{"op":"peek","session":"x"}"#), Ok(Request::Peek { .. })));
    }

    #[test]
    fn classifies_bad_input() {
        let code = |line: &str| parse_request(line).unwrap_err().error;
        assert_eq!(code("{not json"), ErrorCode::MalformedRequest);
        assert_eq!(code("[1,2]"), ErrorCode::MalformedRequest);
        assert_eq!(code(r#"{"op":7}"#), ErrorCode::MalformedRequest);
        assert_eq!(code(r#"{"op":"dance"}"#), ErrorCode::UnknownOp);
        assert_eq!(code(r#"{"op":"report","session":"a","step":-1,"r_avg":0.5}"#), ErrorCode::MalformedRequest);
        assert_eq!(code(r#"{"op":"state"}"#), ErrorCode::MalformedRequest);
    }

    #[test]
    fn session_ids() {
        assert!(validate_session_id("run_01-a").is_ok());
        for bad in ["", "../x", "a b", "é", &"x".repeat(65)] {
            assert!(validate_session_id(bad).is_err());
        }
    }
}
