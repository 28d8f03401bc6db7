//! JSON reports. Every report carries a `meta` object holding the wall-clock
//! time and a SHA-256 digest of the rest of the document, so two runs with
//! the same inputs differ only inside `meta.generated_at_unix`.

use std::time::{SystemTime, UNIX_EPOCH};

use hardline_core::identity_suite::{Certificate, IdentityRow, IdentityScorecard};
use hardline_core::measure::InvarianceReport;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct CenterJson {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiJson {
    pub t: f64,
    pub center: CenterJson,
    pub radius: f64,
    pub i0: f64,
    pub it: f64,
    pub se0: f64,
    pub set: f64,
    pub z: f64,
    pub verdict: &'static str,
}

impl PhiJson {
    pub fn new(t: f64, r: &InvarianceReport) -> Self {
        Self {
            t,
            center: CenterJson { x: r.center.x.clone(), v: r.center.v.clone() },
            radius: r.radius,
            i0: r.i0,
            it: r.it,
            se0: r.se0,
            set: r.set,
            z: r.z_score,
            verdict: r.verdict.as_str(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceJson {
    pub measure: String,
    pub map: String,
    pub n: u64,
    pub seed: u64,
    /// A number for a single time, a list otherwise.
    pub t: Value,
    pub delta_x: f64,
    pub delta_u: f64,
    pub per_phi: Vec<PhiJson>,
    pub verdict: &'static str,
}

pub fn identity_row_json(r: &IdentityRow) -> Value {
    json!({
        "name": r.name,
        "n_samples": r.n_samples,
        "max_rel_error": r.max_rel_error,
        "tolerance": r.tolerance,
        "pass": r.pass,
    })
}

pub fn scorecard_json(s: &IdentityScorecard) -> Value {
    json!({
        "kind": "identities",
        "seed": s.seed,
        "dims": s.dims,
        "n_per_identity": s.n_per_identity,
        "identities": s.rows.iter().map(identity_row_json).collect::<Vec<_>>(),
        "near_singular": s.near_singular.iter().map(identity_row_json).collect::<Vec<_>>(),
        "pass": s.pass,
    })
}

pub fn certificate_json(c: &Certificate) -> Value {
    let entries: Vec<Value> = c
        .entries
        .iter()
        .map(|e| {
            json!({
                "n": e.n,
                "spectral_max_diff": e.spectral_max_diff,
                "eigen_action": e.eigen_action,
                "det": format!("{}/{}", e.det.0, e.det.1),
                "det_ok": e.det_ok,
                "pde_residual": e.pde_residual,
                "momentum": e.momentum,
                "energy": e.energy,
                "involution": e.involution,
                "pass": e.pass,
            })
        })
        .collect();
    json!({ "kind": "certificate", "entries": entries, "pass": c.pass })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact serialisation of `body` (keys sorted).
pub fn digest(body: &Value) -> String {
    hex(&Sha256::digest(serde_json::to_vec(body).unwrap_or_default()))
}

/// Pretty JSON of `body` with a `meta` object appended.
pub fn render(body: impl Serialize) -> Result<String, CliError> {
    let mut value = serde_json::to_value(body).map_err(|e| CliError::usage(e.to_string()))?;
    let Value::Object(map) = &mut value else {
        return Err(CliError::usage("report body must be a JSON object"));
    };
    map.remove("meta");
    let sha = digest(&Value::Object(map.clone()));
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    map.insert("meta".into(), json!({ "generated_at_unix": now, "sha256": sha }));
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| CliError::usage(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Recomputes the digest of a rendered report and compares it with
/// `meta.sha256`.
pub fn check_digest(text: &str) -> bool {
    let Ok(Value::Object(mut map)) = serde_json::from_str::<Value>(text) else {
        return false;
    };
    let Some(meta) = map.remove("meta") else {
        return false;
    };
    meta.get("sha256").and_then(Value::as_str) == Some(digest(&Value::Object(map)).as_str())
}

/// The report with `meta` removed, compactly serialised.
pub fn strip_meta(text: &str) -> Option<String> {
    let Value::Object(mut map) = serde_json::from_str::<Value>(text).ok()? else {
        return None;
    };
    map.remove("meta");
    serde_json::to_string(&map).ok()
}
