//! Artifact writing: every output file starts with a header block recording
//! the config hash, grid, schedule and tool version, followed by a delimited
//! table with fixed 17-significant-digit floats. No timestamps anywhere, so
//! identical configs produce byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ResolvedConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, scientific; round-trips f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn config_hash(cfg: &ResolvedConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(cfg.config_text.as_bytes());
    hasher.update(cfg.spec_text.as_bytes());
    hasher.update(format!("seed={}", cfg.seed).as_bytes());
    hasher.update(format!("mode={}", cfg.mode.as_str()).as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn header_block(cfg: &ResolvedConfig) -> String {
    format!(
        "# evolve1d v{TOOL_VERSION}\n\
         # config_hash=sha256:{}\n\
         # grid: half_width={} n={}\n\
         # schedule: s={} t={} n_slices={} substeps={} sampling={:?}\n\
         # seed={}\n",
        config_hash(cfg),
        fmt_f64(cfg.grid.half_width()),
        cfg.grid.n(),
        fmt_f64(cfg.schedule.s),
        fmt_f64(cfg.schedule.t),
        cfg.schedule.n_slices,
        cfg.schedule.substeps,
        cfg.sampling,
        cfg.seed,
    )
}

/// Writes header + body into `<output_dir>/<name>`.
pub fn write_artifact(cfg: &ResolvedConfig, name: &str, body: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(name);
    let mut file = std::fs::File::create(&path)?;
    file.write_all(header_block(cfg).as_bytes())?;
    file.write_all(body.as_bytes())?;
    Ok(path)
}

/// Reads a state file: rows `re,im`, lines starting with '#' skipped.
pub fn read_state_file(path: &Path) -> std::io::Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("re,") {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> std::io::Result<f64> {
            s.and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: bad state row at line {}", path.display(), lineno + 1),
                )
            })
        };
        let re = parse(parts.next())?;
        let im = parse(parts.next())?;
        rows.push((re, im));
    }
    Ok(rows)
}
