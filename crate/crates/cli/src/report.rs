use std::io::Write;
use std::path::Path;
use std::time::Duration;

use conenorm::seminorm::DEFAULT_BISECTION_TOL;
use conenorm::sos::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub tool: String,
    pub default_tol: f64,
    pub default_max_iter: usize,
    pub default_bisection_tol: f64,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            tool: format!("conenorm {}", env!("CARGO_PKG_VERSION")),
            default_tol: DEFAULT_TOL,
            default_max_iter: DEFAULT_MAX_ITER,
            default_bisection_tol: DEFAULT_BISECTION_TOL,
        }
    }
}

/// Envelope printed by every subcommand. Everything but `timing_ms` is a
/// function of the inputs.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Value,
    pub result: Value,
    pub timing_ms: f64,
    pub versions: Versions,
}

impl RunReport {
    pub fn new(command: &str, inputs: Value, result: Value, elapsed: Duration) -> Self {
        RunReport {
            command: command.to_string(),
            inputs,
            result,
            timing_ms: elapsed.as_secs_f64() * 1e3,
            versions: Versions::default(),
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}
