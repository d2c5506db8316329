use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct Timestamps {
    pub started_unix: f64,
    pub finished_unix: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultEnvelope {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: Value,
    pub timestamps: Timestamps,
    pub payload: Value,
    pub provenance: Value,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl ResultEnvelope {
    pub fn new(command: &'static str, config: Value, started: f64, payload: Value, provenance: Value) -> Self {
        let mut provenance = provenance;
        if let Value::Object(m) = &mut provenance {
            m.insert("ltlab_version".into(), env!("CARGO_PKG_VERSION").into());
        }
        ResultEnvelope {
            schema_version: SCHEMA_VERSION,
            command,
            config,
            timestamps: Timestamps { started_unix: started, finished_unix: now_unix() },
            payload,
            provenance,
        }
    }
}
