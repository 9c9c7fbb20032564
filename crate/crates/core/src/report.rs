//! Machine-readable run reports: canonical JSON (deterministic bytes,
//! 12-significant-digit floats, input content digests) and a CSV projection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;

/// Round to 12 significant digits so repeated runs print identical bytes.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - mag);
    (x * scale).round() / scale
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                        *v = Value::Number(r);
                    }
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn digest_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub status: String,
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub diagnostics: Value,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            status: "ok".to_string(),
            inputs: BTreeMap::new(),
            lower: None,
            upper: None,
            details: Value::Null,
            diagnostics: Value::Null,
        }
    }

    pub fn with_input(mut self, name: &str, path: &Path) -> Result<Self, Error> {
        self.inputs
            .insert(name.to_string(), digest_file(path)?);
        Ok(self)
    }

    pub fn error(command: &str, err: &Error) -> Self {
        let mut r = Report::new(command);
        r.status = "error".into();
        r.details = json!({ "code": err.code(), "message": err.to_string() });
        r
    }

    /// Canonical JSON: sorted keys, rounded floats, trailing newline.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_value(&mut v);
        let mut s = serde_json::to_string_pretty(&sort_keys(v)).expect("report prints");
        s.push('\n');
        s
    }

    /// Flat projection: one header line and one value line.
    pub fn to_csv(&self) -> String {
        let mut cols = vec![("command", self.command.clone()), ("status", self.status.clone())];
        if let Some(l) = self.lower {
            cols.push(("lower", format!("{}", round_sig(l))));
        }
        if let Some(u) = self.upper {
            cols.push(("upper", format!("{}", round_sig(u))));
        }
        let header: Vec<&str> = cols.iter().map(|(k, _)| *k).collect();
        let row: Vec<String> = cols.into_iter().map(|(_, v)| v).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(o) => {
            let sorted: BTreeMap<String, Value> = o.into_iter().collect();
            let mut out = Map::new();
            for (k, val) in sorted {
                out.insert(k, sort_keys(val));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Sweep output: one CSV row per strike, input order preserved.
pub fn sweep_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("strike,lower,upper\n");
    for &(k, lo, hi) in rows {
        s.push_str(&format!(
            "{},{},{}\n",
            round_sig(k),
            round_sig(lo),
            round_sig(hi)
        ));
    }
    s
}
