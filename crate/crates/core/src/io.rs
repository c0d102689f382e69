//! Configuration loading, CSV serialization of results, and the run
//! manifest that makes every experiment reproducible from its inputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::RawConfig;
use crate::sim::{EllipseResult, TimeSeries};

/// Reads a file into a string with path context on failure.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parses the JSON configuration document. Unknown keys are reported as a
/// dedicated error so typos do not silently fall back to defaults; other
/// syntax problems carry the line and column.
pub fn parse_config(text: &str) -> Result<RawConfig> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        if let Some(key) = unknown_field(&message) {
            Error::UnknownKey { keys: vec![key] }
        } else {
            Error::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        }
    })
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    let end = rest.find('`')?;
    Some(rest[..end].to_string())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RawConfig> {
    parse_config(&read_text(path)?)
}

/// Applies one `key=value` override to a parsed configuration document.
/// The dotted key must name an existing scalar; the value is parsed as
/// JSON (numbers, booleans, arrays) with a plain-string fallback.
pub fn apply_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw_value) = assignment.split_once('=').ok_or_else(|| Error::Validation {
        field: assignment.to_string(),
        message: "override must have the form key=value".into(),
    })?;
    let mut node = &mut *doc;
    for part in key.split('.') {
        node = match node {
            serde_json::Value::Object(map) => map.get_mut(part).ok_or_else(|| {
                Error::UnknownKey {
                    keys: vec![key.to_string()],
                }
            })?,
            serde_json::Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::UnknownKey {
                    keys: vec![key.to_string()],
                })?;
                items.get_mut(idx).ok_or_else(|| Error::UnknownKey {
                    keys: vec![key.to_string()],
                })?
            }
            _ => {
                return Err(Error::UnknownKey {
                    keys: vec![key.to_string()],
                })
            }
        };
    }
    *node = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    Ok(())
}

fn fmt(v: f64) -> String {
    // Rust's shortest round-trip float formatting
    format!("{v}")
}

/// CSV for a set of regressed stiffness ellipses, one row per schedule
/// point. Columns: alpha, the symmetric stiffness entries, ellipse axes
/// and orientation, and the deviation radius used for regression.
pub fn ellipse_csv(rows: &[(f64, EllipseResult)]) -> String {
    let mut out =
        String::from("alpha,k11,k12,k22,semi_major,semi_minor,orientation_rad,deviation_radius_rad\n");
    for (alpha, e) in rows {
        let m = e.k_regressed.matrix();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(*alpha),
            fmt(m[(0, 0)]),
            fmt(m[(0, 1)]),
            fmt(m[(1, 1)]),
            fmt(e.semi_axes.0),
            fmt(e.semi_axes.1),
            fmt(e.orientation),
            fmt(e.deviation_radius),
        ));
    }
    out
}

/// CSV for step-response trajectories of a 2-DoF joint, one block per
/// schedule point tagged by its alpha column.
pub fn step_csv(runs: &[(f64, TimeSeries)]) -> Result<String> {
    let mut out = String::from("t,q1,q2,qd1,qd2,tau1,tau2,alpha\n");
    for (alpha, s) in runs {
        if s.q.first().map(|q| q.len()) != Some(2) {
            return Err(Error::Shape(
                "step CSV expects 2-DoF trajectories".into(),
            ));
        }
        for i in 0..s.t.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt(s.t[i]),
                fmt(s.q[i][0]),
                fmt(s.q[i][1]),
                fmt(s.qdot[i][0]),
                fmt(s.qdot[i][1]),
                fmt(s.tau[i][0]),
                fmt(s.tau[i][1]),
                fmt(*alpha),
            ));
        }
    }
    Ok(out)
}

/// CSV for compensatory grasp-force curves, one block per schedule point.
pub fn grasp_csv(runs: &[(f64, Vec<(f64, f64)>)]) -> String {
    let mut out = String::from("alpha,delta_p_m,f_p_n\n");
    for (alpha, curve) in runs {
        for (dp, fp) in curve {
            out.push_str(&format!("{},{},{}\n", fmt(*alpha), fmt(*dp), fmt(*fp)));
        }
    }
    out
}

/// Hex SHA-256 digest of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestOutput {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: what was read, what was produced, and with which
/// tool. Written after all outputs so a partial run never leaves a
/// manifest behind.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub tool_version: String,
    pub command: String,
    pub outputs: Vec<ManifestOutput>,
    pub timestamp: String,
}

/// One named output file with its full contents.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Manifest timestamp: honors the `SOURCE_DATE_EPOCH` convention so runs
/// can be made byte-for-byte reproducible, otherwise the current UTC time.
pub fn manifest_timestamp() -> String {
    let dt = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::<chrono::Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes all artifacts into `out_dir` (created if absent), then the
/// manifest. The manifest lands atomically via a temporary file and
/// rename, so readers never observe a half-written manifest.
pub fn write_results(
    artifacts: &[Artifact],
    out_dir: &Path,
    config_text: &str,
    command: &str,
) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let path = out_dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        outputs.push(ManifestOutput {
            path: a.name.clone(),
            sha256: digest(a.contents.as_bytes()),
        });
    }
    let manifest = RunManifest {
        config_sha256: digest(config_text.as_bytes()),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        outputs,
        timestamp: manifest_timestamp(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let tmp = out_dir.join("manifest.json.tmp");
    let final_path = out_dir.join("manifest.json");
    std::fs::write(&tmp, &text).map_err(|e| Error::Io {
        path: tmp.display().to_string(),
        source: e,
    })?;
    std::fs::rename(&tmp, &final_path).map_err(|e| Error::Io {
        path: final_path.display().to_string(),
        source: e,
    })?;
    Ok(manifest)
}

/// Path of the manifest inside an output directory.
pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}
