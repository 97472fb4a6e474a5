//! Version-1 wire protocol: one JSON object per line.
//!
//! Request `{v, id, op, args}`, response `{v, id, ok, result | error}`.
//! Tap frames are unsolicited `{v, event: "frame", ...}` messages.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use gyrocond_core::regmap::RegError;
use gyrocond_core::sim::SimError;
use gyrocond_core::supervisor::CaptureError;
use gyrocond_core::TapId;

pub const VERSION: u32 = 1;

pub const OPS: [&str; 11] = [
    "get_status",
    "read_reg",
    "write_reg",
    "selfcheck",
    "capture",
    "subscribe_tap",
    "unsubscribe_tap",
    "set_environment",
    "run_scenario",
    "reset",
    "get_manifest",
];

/// Error codes carried in `error.code`.
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const VERSION: &str = "version";
    pub const UNKNOWN_OP: &str = "unknown-op";
    pub const READ_ONLY: &str = "read-only";
    pub const UNKNOWN_REGISTER: &str = "unknown-register";
    pub const WIDTH: &str = "width";
    pub const REJECTED: &str = "rejected";
    pub const UNKNOWN_TAP: &str = "unknown-tap";
    pub const CAPACITY: &str = "capacity";
    pub const BUSY: &str = "busy";
    pub const BAD_ARGS: &str = "bad-args";
    pub const DUPLICATE_ID: &str = "duplicate-id";
    pub const SCENARIO_FAILED: &str = "scenario-failed";
    pub const HALTED: &str = "halted";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    #[serde(default = "version")]
    pub v: u32,
    pub id: Value,
    pub op: String,
    #[serde(default)]
    pub args: Value,
}

fn version() -> u32 {
    VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    pub id: Value,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn ok(id: Value, result: Value) -> Self {
        Self {
            v: VERSION,
            id,
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn err(id: Value, e: ProtocolError) -> Self {
        Self {
            v: VERSION,
            id,
            ok: false,
            result: None,
            error: Some(ErrorBody {
                code: e.code.to_string(),
                message: e.message,
            }),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

/// A batch of quantized tap samples; `value = offset + code·scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    pub event: String,
    pub tap: TapId,
    /// Simulated time of the first sample, s.
    pub t: f64,
    pub fs: f64,
    pub scale: f64,
    pub offset: f64,
    pub codes: Vec<i16>,
    /// Frames lost to backpressure since the previous delivered frame.
    pub dropped: u64,
}

impl Frame {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolError {
    pub code: &'static str,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn bad_args(message: impl Into<String>) -> Self {
        Self::new(codes::BAD_ARGS, message)
    }
}

impl From<RegError> for ProtocolError {
    fn from(e: RegError) -> Self {
        let code = match e {
            RegError::Unknown(_) => codes::UNKNOWN_REGISTER,
            RegError::ReadOnly(_) => codes::READ_ONLY,
            RegError::Width { .. } => codes::WIDTH,
            RegError::Rejected { .. } => codes::REJECTED,
            RegError::Busy => codes::BUSY,
        };
        Self::new(code, e.to_string())
    }
}

impl From<CaptureError> for ProtocolError {
    fn from(e: CaptureError) -> Self {
        let code = match e {
            CaptureError::Capacity(_) => codes::CAPACITY,
            CaptureError::Busy => codes::BUSY,
            CaptureError::Empty | CaptureError::Decimation => codes::BAD_ARGS,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SimError> for ProtocolError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Reg(r) => r.into(),
            SimError::Capture(c) => c.into(),
            SimError::Gyro(_) | SimError::Halted => Self::new(codes::HALTED, e.to_string()),
        }
    }
}

/// Parses one line; a failure is already the response to send.
pub fn parse_request(line: &str) -> Result<Request, Response> {
    let value: Value = serde_json::from_str(line).map_err(|e| {
        Response::err(Value::Null, ProtocolError::new(codes::MALFORMED, e.to_string()))
    })?;
    let id = value.get("id").cloned().unwrap_or(Value::Null);
    let req: Request = serde_json::from_value(value)
        .map_err(|e| Response::err(id.clone(), ProtocolError::new(codes::MALFORMED, e.to_string())))?;
    if !(req.id.is_string() || req.id.is_number()) {
        return Err(Response::err(
            id,
            ProtocolError::new(codes::MALFORMED, "id must be a string or a number"),
        ));
    }
    if req.v != VERSION {
        return Err(Response::err(
            req.id,
            ProtocolError::new(codes::VERSION, format!("unsupported version {}", req.v)),
        ));
    }
    Ok(req)
}

pub fn tap_arg(args: &Value) -> Result<TapId, ProtocolError> {
    let name = args
        .get("tap")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::bad_args("missing string `tap`"))?;
    TapId::from_name(name).ok_or_else(|| ProtocolError::new(codes::UNKNOWN_TAP, format!("unknown tap `{name}`")))
}

pub fn str_arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, ProtocolError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::bad_args(format!("missing string `{key}`")))
}

pub fn u64_arg(args: &Value, key: &str) -> Result<Option<u64>, ProtocolError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| ProtocolError::bad_args(format!("`{key}` must be a non-negative integer"))),
    }
}

pub fn f64_arg(args: &Value, key: &str) -> Result<Option<f64>, ProtocolError> {
    match args.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| ProtocolError::bad_args(format!("`{key}` must be a finite number"))),
    }
}
