//! Flat per-tick export of a trajectory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Snapshot, Trajectory};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("trajectory has no snapshots")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn file_name(self) -> &'static str {
        match self {
            Format::Csv => "metrics.csv",
            Format::Json => "trajectory.json",
        }
    }
}

/// Column names: `tick`, `system_trust`, four columns per edge
/// (`a->b:capability|predictability|integrity|rung`), one `gate:<id>` per
/// gate and one `progress:<agent>:<goal>` per agent and goal.
pub fn csv_header(first: &Snapshot) -> Vec<String> {
    let mut h = vec!["tick".to_string(), "system_trust".to_string()];
    for e in &first.edges {
        for field in ["capability", "predictability", "integrity", "rung"] {
            h.push(format!("{}->{}:{field}", e.trustor, e.trustee));
        }
    }
    for g in &first.gates {
        h.push(format!("gate:{}", g.id));
    }
    for (agent, goals) in &first.goal_progress {
        for goal in goals.keys() {
            h.push(format!("progress:{agent}:{goal}"));
        }
    }
    h
}

fn row(s: &Snapshot) -> Vec<String> {
    let mut r = vec![s.tick.to_string(), s.system_trust.to_string()];
    for e in &s.edges {
        r.push(e.capability.to_string());
        r.push(e.predictability.to_string());
        r.push(e.integrity.to_string());
        r.push(e.rung.to_string());
    }
    for g in &s.gates {
        r.push(g.label().to_string());
    }
    for goals in s.goal_progress.values() {
        for p in goals.values() {
            r.push(p.to_string());
        }
    }
    r
}

pub fn to_csv(traj: &Trajectory) -> Result<String, ExportError> {
    let first = traj.snapshots.first().ok_or(ExportError::Empty)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(first))?;
    for s in &traj.snapshots {
        w.write_record(row(s))?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the chosen format into `dir` and returns the file path.
pub fn export_metrics(traj: &Trajectory, format: Format, dir: &Path) -> Result<PathBuf, ExportError> {
    if traj.snapshots.is_empty() {
        return Err(ExportError::Empty);
    }
    let text = match format {
        Format::Csv => to_csv(traj)?,
        Format::Json => traj.to_json(),
    };
    let path = dir.join(format.file_name());
    std::fs::write(&path, text).map_err(|source| ExportError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
