use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use coherence_core::io::SCHEMA_VERSION;
use coherence_core::CoherenceError;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, Value>, seed: u64) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }
}

/// Failure reported as one JSON line on standard error.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError {
            code: 2,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message, "exit_code": self.code }).to_string()
    }
}

impl From<CoherenceError> for CliError {
    fn from(e: CoherenceError) -> CliError {
        let (code, kind) = match &e {
            CoherenceError::Validation(_) => (2, "validation"),
            CoherenceError::Parse(_) => (2, "parse"),
            CoherenceError::InconsistentData { .. } => (2, "inconsistent_data"),
            CoherenceError::InfeasibleData => (2, "infeasible_data"),
            CoherenceError::DegenerateObservable => (2, "degenerate_observable"),
            CoherenceError::Solver { .. } => (3, "solver"),
            CoherenceError::Numerical(_) => (3, "numerical"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Sidecar path `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `{schema_version, command, result, manifest}` pretty-printed.
pub fn envelope(manifest: &RunManifest, result: Value) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": manifest.command,
        "result": result,
        "manifest": manifest,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("result serialises");
    s.push('\n');
    s
}

pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coherence_sdp::Status;

    #[test]
    fn exit_codes() {
        let solver = CoherenceError::Solver {
            status: Status::MaxIter,
            context: "rmc".into(),
        };
        assert_eq!(CliError::from(solver).code, 3);
        assert_eq!(
            CliError::from(CoherenceError::Numerical("nan".into())).code,
            3
        );
        assert_eq!(CliError::from(CoherenceError::InfeasibleData).code, 2);
        assert_eq!(CliError::from(CoherenceError::Parse("x".into())).code, 2);
        let line = CliError::usage("bad\nflag").to_json();
        assert_eq!(line.lines().count(), 1);
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            manifest_path(Path::new("out/fig4.csv")),
            PathBuf::from("out/fig4.csv.manifest.json")
        );
    }
}
