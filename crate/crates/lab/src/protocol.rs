//! Newline-delimited JSON wire format, version 1.
//!
//! Requests:
//!
//! ```text
//! {"v":1,"type":"ping"}
//! {"v":1,"type":"run","config":{"kind":"rabi","pulse_time_ns":22.0,...},"seed_echo":7}
//! {"v":1,"type":"track","reference_reps":300000}
//! {"v":1,"type":"reset","truth":{...},"seed":42}
//! ```
//!
//! Every request line gets exactly one response line:
//!
//! ```text
//! {"v":1,"status":"ok","datum":{"X":..,"Y":..,"Z":..,"N":..,"timestamp":..},"cache_hit":false,"seed_echo":7}
//! {"v":1,"status":"error","error":"..."}
//! ```

use nvdesign_core::{Datum, ExperimentConfig, ModelParameters};
use serde::{Deserialize, Serialize};

use crate::system::TrueSystem;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Ping {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed_echo: Option<u64>,
    },
    Run {
        config: ExperimentConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed_echo: Option<u64>,
    },
    Track {
        #[serde(default)]
        reference_reps: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed_echo: Option<u64>,
    },
    Reset {
        truth: ModelParameters,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed_echo: Option<u64>,
    },
}

impl Request {
    fn seed_echo(&self) -> Option<u64> {
        match self {
            Request::Ping { seed_echo }
            | Request::Run { seed_echo, .. }
            | Request::Track { seed_echo, .. }
            | Request::Reset { seed_echo, .. } => *seed_echo,
        }
    }

    pub fn to_line(&self) -> String {
        let mut value = serde_json::to_value(self).expect("requests serialize");
        value
            .as_object_mut()
            .expect("tagged enum is an object")
            .insert("v".into(), PROTOCOL_VERSION.into());
        let mut line = value.to_string();
        line.push('\n');
        line
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireDatum {
    #[serde(rename = "X")]
    pub x: u64,
    #[serde(rename = "Y")]
    pub y: u64,
    #[serde(rename = "Z")]
    pub z: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub timestamp: f64,
}

impl From<Datum> for WireDatum {
    fn from(d: Datum) -> Self {
        WireDatum { x: d.bright_counts, y: d.dark_counts, z: d.signal_counts, n: d.repetitions, timestamp: d.timestamp }
    }
}

impl From<WireDatum> for Datum {
    fn from(w: WireDatum) -> Self {
        Datum { bright_counts: w.x, dark_counts: w.y, signal_counts: w.z, repetitions: w.n, timestamp: w.timestamp }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<WireDatum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_hit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_echo: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn ok(seed_echo: Option<u64>) -> Self {
        Response { v: PROTOCOL_VERSION, status: Status::Ok, datum: None, cache_hit: None, seed_echo, error: None }
    }

    pub fn error(message: impl Into<String>, seed_echo: Option<u64>) -> Self {
        Response { error: Some(message.into()), status: Status::Error, ..Response::ok(seed_echo) }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("responses serialize");
        line.push('\n');
        line
    }
}

/// Parse one request line, checking the version before the body.
pub fn parse_request(line: &str) -> Result<Request, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let version = value.get("v").and_then(|v| v.as_u64());
    match version {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => return Err(format!("unsupported protocol version {v}, expected {PROTOCOL_VERSION}")),
        None => return Err("missing protocol version field \"v\"".into()),
    }
    let mut body = value;
    body.as_object_mut().ok_or("request must be a JSON object")?.remove("v");
    serde_json::from_value(body).map_err(|e| format!("bad request: {e}"))
}

/// Apply one request line to the system and produce its response.
pub fn handle_line(system: &mut TrueSystem, line: &str) -> Response {
    let request = match parse_request(line.trim_end_matches(['\r', '\n'])) {
        Ok(r) => r,
        Err(e) => {
            let echo = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("seed_echo").and_then(|s| s.as_u64()));
            return Response::error(e, echo);
        }
    };
    let echo = request.seed_echo();
    match request {
        Request::Ping { .. } => Response::ok(echo),
        Request::Run { config, .. } => match system.execute(&config) {
            Ok(out) => Response { datum: Some(out.datum.into()), cache_hit: Some(out.cache_hit), ..Response::ok(echo) },
            Err(e) => Response::error(e.to_string(), echo),
        },
        Request::Track { reference_reps, .. } => match system.track(reference_reps) {
            Ok(d) => Response { datum: d.map(Into::into), ..Response::ok(echo) },
            Err(e) => Response::error(e.to_string(), echo),
        },
        Request::Reset { truth, seed, .. } => match system.reset(truth, seed) {
            Ok(()) => Response::ok(echo),
            Err(e) => Response::error(e.to_string(), echo),
        },
    }
}
