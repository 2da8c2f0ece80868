//! Run directories, reports and tables.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::commands::Outcome;
use crate::Failure;

pub struct RunInfo<'a> {
    pub command: &'a str,
    /// Command name plus any flag overrides; part of the directory hash.
    pub tag: &'a str,
    pub seed: u64,
    pub config_path: &'a Path,
    pub started: SystemTime,
}

/// First sixteen hex digits of the hash of the config bytes, seed and command.
pub fn run_id(config: &[u8], seed: u64, tag: &str) -> String {
    let mut h = Sha256::new();
    h.update(config);
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

fn put(path: PathBuf, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(&path, bytes).map_err(|e| io(&path, e))
}

fn secs(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Write `report.json`, `ratios.csv`, `metadata.json` and the artifacts.
pub fn write(out: &Path, config: &[u8], run: &RunInfo, outcome: &Outcome) -> Result<PathBuf, Failure> {
    let id = run_id(config, run.seed, run.tag);
    let dir = out.join(format!("{}-{id}", run.command));
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let report = json!({
        "command": run.command,
        "seed": run.seed,
        "run_id": id,
        "pass": outcome.reports.iter().all(|r| r.pass),
        "reports": outcome.reports,
        "summary": outcome.summary,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    put(dir.join("report.json"), text.as_bytes())?;

    let mut csv = String::from("name,lhs,rhs,ratio,tolerance,pass,vacuous,quadrature_defect\n");
    for r in &outcome.reports {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{},{},{:e}\n",
            r.name, r.lhs, r.rhs, r.ratio, r.tolerance, r.pass, r.vacuous, r.quadrature_defect
        ));
    }
    put(dir.join("ratios.csv"), csv.as_bytes())?;
    for (name, bytes) in &outcome.artifacts {
        put(dir.join(name), bytes)?;
    }

    let finished = SystemTime::now();
    let meta = json!({
        "config": run.config_path.display().to_string(),
        "started_unix": secs(run.started),
        "finished_unix": secs(finished),
        "elapsed_seconds": secs(finished) - secs(run.started),
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    put(dir.join("metadata.json"), serde_json::to_string_pretty(&meta).expect("serialises").as_bytes())?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_every_input() {
        let a = run_id(b"x = 1", 1, "solve");
        assert_eq!(a.len(), 16);
        assert_eq!(a, run_id(b"x = 1", 1, "solve"));
        assert_ne!(a, run_id(b"x = 2", 1, "solve"));
        assert_ne!(a, run_id(b"x = 1", 2, "solve"));
        assert_ne!(a, run_id(b"x = 1", 1, "gehring"));
    }
}
