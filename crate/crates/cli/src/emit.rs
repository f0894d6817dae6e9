use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use tempfile::NamedTempFile;

use crate::config::Format;
use crate::run::ResultEnvelope;
use crate::CliError;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Path of the envelope written next to a payload file.
pub fn envelope_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".envelope.json");
    PathBuf::from(s)
}

/// Envelope JSON; the payload is inline for JSON output and a path for CSV output.
pub fn envelope_json(
    env: &ResultEnvelope,
    format: Format,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let payload = match (format, out) {
        (Format::Json, _) => env.payload.to_json()?,
        (Format::Csv, Some(p)) => json!({ "path": p }),
        (Format::Csv, None) => json!({ "path": null }),
    };
    let v = json!({
        "config": env.config,
        "artifact_version": env.version,
        "wall_time_s": env.wall_time_s,
        "payload": payload,
        "warnings": env.warnings,
    });
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Renders the payload and writes it, its envelope and any transcript.
///
/// Without `out` the payload goes to stdout and nothing is written to disk.
/// Returns the paths written.
pub fn emit_results(
    env: &ResultEnvelope,
    format: Format,
    out: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let body = env.payload.render(format)?;
    let mut written = Vec::new();
    match out {
        Some(path) => {
            write_atomic(path, body.as_bytes())?;
            written.push(path.to_path_buf());
            let ep = envelope_path(path);
            write_atomic(&ep, envelope_json(env, format, Some(path))?.as_bytes())?;
            written.push(ep);
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    let transcript_path = env
        .normalized
        .protocol_run
        .as_ref()
        .and_then(|p| p.transcript.clone());
    if let (Some(t), Some(path)) = (env.payload.transcript(), transcript_path) {
        write_atomic(&path, t.to_json_lines().as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
