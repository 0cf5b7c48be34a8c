//! Append-only mission log: one tagged record per line, contiguous `seq`
//! starting at 1.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AgentId, Cell};
use crate::world::{ActionKind, Outcome};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log line {line}: expected seq {expected}, found {found}")]
    Sequence { line: usize, expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Who decided an action or rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSource {
    Policy,
    Command,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub seq: u64,
    pub agent_id: AgentId,
    pub time: u64,
    pub location: Cell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub action: ActionKind,
    pub outcome: Outcome,
    pub source: ActionSource,
    /// The agent whose decision this was: the actor itself unless commanded.
    pub issuer: AgentId,
}

/// An external command as received, with the verdict at drain time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRecord {
    pub seq: u64,
    pub tick: u64,
    pub issuer: AgentId,
    pub agent: AgentId,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    SelfishGoal,
    TeamGoal,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub seq: u64,
    pub tick: u64,
    pub rater: AgentId,
    pub ratee: AgentId,
    pub expectation: Expectation,
    pub source: ActionSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRecord {
    pub seq: u64,
    pub tick: u64,
    pub issuer: AgentId,
    pub gate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum LogRecord {
    Command(CommandRecord),
    Event(EventRecord),
    Rating(RatingRecord),
    GateOverride(OverrideRecord),
}

impl LogRecord {
    pub fn seq(&self) -> u64 {
        match self {
            LogRecord::Command(r) => r.seq,
            LogRecord::Event(r) => r.seq,
            LogRecord::Rating(r) => r.seq,
            LogRecord::GateOverride(r) => r.seq,
        }
    }

    pub fn tick(&self) -> u64 {
        match self {
            LogRecord::Command(r) => r.tick,
            LogRecord::Event(r) => r.time,
            LogRecord::Rating(r) => r.tick,
            LogRecord::GateOverride(r) => r.tick,
        }
    }
}

pub fn to_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(records: &[LogRecord], mut w: impl Write) -> std::io::Result<()> {
    w.write_all(to_jsonl(records).as_bytes())
}

/// Parses a log and checks that `seq` runs 1, 2, 3, ... without gaps.
pub fn read_jsonl(r: impl BufRead) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let expected = out.len() as u64 + 1;
        if rec.seq() != expected {
            return Err(LogError::Sequence {
                line: i + 1,
                expected,
                found: rec.seq(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
