//! JSON bodies exchanged with the gateway. Every body carries `"v": 1`;
//! request bodies reject unknown fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::log::Expectation;
use crate::scenario::ScenarioSpec;
use crate::sim::{EdgeView, GateView, Input, Snapshot};
use crate::world::ActionKind;
use crate::{AgentId, Cell};

pub const VERSION: u32 = 1;

/// Rejection reasons produced by the gateway itself, on top of
/// [`crate::sim::reason`].
pub mod reason {
    pub const MALFORMED: &str = "malformed";
    pub const UNSUPPORTED_VERSION: &str = "unsupported-version";
    pub const MISSION_ENDED: &str = "mission-ended";
    pub const SHUTTING_DOWN: &str = "shutting-down";
}

fn version() -> u32 {
    VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Move,
    Scan,
    Assist,
    Recharge,
    Idle,
    Pause,
    Resume,
    OverrideGate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandParams {
    /// Destination of a move.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Cell>,
    /// Tag to scan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Teammate to assist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teammate: Option<AgentId>,
}

impl CommandParams {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandMessage {
    pub v: u32,
    pub kind: CommandKind,
    pub issuer: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_agent: Option<AgentId>,
    #[serde(default, skip_serializing_if = "CommandParams::is_empty")]
    pub params: CommandParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<String>,
}

/// What an accepted command does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Directive {
    Input { input: Input },
    Pause { issuer: AgentId },
    Resume { issuer: AgentId },
}

impl CommandMessage {
    pub fn new(kind: CommandKind, issuer: impl Into<AgentId>) -> Self {
        Self {
            v: VERSION,
            kind,
            issuer: issuer.into(),
            target_agent: None,
            params: CommandParams::default(),
            client_ts: None,
        }
    }

    pub fn target(mut self, agent: impl Into<AgentId>) -> Self {
        self.target_agent = Some(agent.into());
        self
    }

    pub fn params(mut self, params: CommandParams) -> Self {
        self.params = params;
        self
    }

    /// Checks the message shape: version, a target for agent actions and
    /// exactly the params each kind needs.
    pub fn directive(&self) -> Result<Directive, &'static str> {
        use crate::sim::reason::INVALID_PARAMS;
        if self.v != VERSION {
            return Err(reason::UNSUPPORTED_VERSION);
        }
        let p = &self.params;
        let (action, object) = match self.kind {
            CommandKind::Pause | CommandKind::Resume | CommandKind::OverrideGate => {
                if self.target_agent.is_some() || !p.is_empty() {
                    return Err(INVALID_PARAMS);
                }
                let issuer = self.issuer.clone();
                return Ok(match self.kind {
                    CommandKind::Pause => Directive::Pause { issuer },
                    CommandKind::Resume => Directive::Resume { issuer },
                    _ => Directive::Input {
                        input: Input::OverrideGate { issuer },
                    },
                });
            }
            CommandKind::Move => match p {
                CommandParams { to: Some(c), tag: None, teammate: None } => (ActionKind::MoveTo, Some(c.to_string())),
                _ => return Err(INVALID_PARAMS),
            },
            CommandKind::Scan => match p {
                CommandParams { to: None, tag: Some(t), teammate: None } => (ActionKind::Scan, Some(t.clone())),
                _ => return Err(INVALID_PARAMS),
            },
            CommandKind::Assist => match p {
                CommandParams { to: None, tag: None, teammate: Some(a) } => (ActionKind::Assist, Some(a.to_string())),
                _ => return Err(INVALID_PARAMS),
            },
            CommandKind::Recharge | CommandKind::Idle => {
                if !p.is_empty() {
                    return Err(INVALID_PARAMS);
                }
                let kind = if self.kind == CommandKind::Idle {
                    ActionKind::Idle
                } else {
                    ActionKind::Recharge
                };
                (kind, None)
            }
        };
        let agent = self.target_agent.clone().ok_or(INVALID_PARAMS)?;
        Ok(Directive::Input {
            input: Input::Command {
                issuer: self.issuer.clone(),
                agent,
                action,
                object,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingMessage {
    pub v: u32,
    pub rater: AgentId,
    pub ratee: AgentId,
    pub expectation: Expectation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_ts: Option<String>,
}

impl RatingMessage {
    pub fn new(rater: impl Into<AgentId>, ratee: impl Into<AgentId>, expectation: Expectation) -> Self {
        Self {
            v: VERSION,
            rater: rater.into(),
            ratee: ratee.into(),
            expectation,
            client_ts: None,
        }
    }

    pub fn input(&self) -> Result<Input, &'static str> {
        if self.v != VERSION {
            return Err(reason::UNSUPPORTED_VERSION);
        }
        Ok(Input::Rating {
            rater: self.rater.clone(),
            ratee: self.ratee.clone(),
            expectation: self.expectation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AckStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    #[serde(default = "version")]
    pub v: u32,
    pub status: AckStatus,
    /// Position in the command log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Ack {
    pub fn accepted(seq: u64) -> Self {
        Self {
            v: VERSION,
            status: AckStatus::Accepted,
            seq: Some(seq),
            reason: None,
        }
    }

    pub fn rejected(reason: impl Into<String>) -> Self {
        Self {
            v: VERSION,
            status: AckStatus::Rejected,
            seq: None,
            reason: Some(reason.into()),
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == AckStatus::Accepted
    }
}

/// One line of the gateway's command log. `tick` is the tick the command
/// takes effect at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLogEntry {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub directive: Directive,
}

/// Simulation inputs from a command log, grouped by the tick they apply at.
pub fn inputs_by_tick(entries: &[CommandLogEntry]) -> BTreeMap<u64, Vec<Input>> {
    let mut out: BTreeMap<u64, Vec<Input>> = BTreeMap::new();
    for e in entries {
        if let Directive::Input { input } = &e.directive {
            out.entry(e.tick).or_default().push(input.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub v: u32,
    #[serde(flatten)]
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub v: u32,
    pub seed: u64,
    pub paused: bool,
    pub ended: bool,
    /// Last tick of the mission, if it has a fixed length.
    pub final_tick: Option<u64>,
    pub frame: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustView {
    pub v: u32,
    pub tick: u64,
    pub edges: Vec<EdgeView>,
    pub system_trust: f64,
    pub gates: Vec<GateView>,
}

impl TrustView {
    pub fn of(s: &Snapshot) -> Self {
        Self {
            v: VERSION,
            tick: s.tick,
            edges: s.edges.clone(),
            system_trust: s.system_trust,
            gates: s.gates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioView {
    pub v: u32,
    pub seed: u64,
    pub scenario: ScenarioSpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CommandMessage, serde_json::Error> {
        serde_json::from_str(text)
    }

    #[test]
    fn move_becomes_a_command_input() {
        let m = parse(r#"{"v":1,"kind":"move","issuer":"coordinator","target_agent":"robot-1","params":{"to":{"x":2,"y":3}}}"#).unwrap();
        assert_eq!(
            m.directive().unwrap(),
            Directive::Input {
                input: Input::Command {
                    issuer: "coordinator".into(),
                    agent: "robot-1".into(),
                    action: ActionKind::MoveTo,
                    object: Some("2,3".into()),
                }
            }
        );
    }

    #[test]
    fn unknown_fields_are_refused() {
        assert!(parse(r#"{"v":1,"kind":"idle","issuer":"c","target_agent":"r","extra":1}"#).is_err());
        assert!(parse(r#"{"v":1,"kind":"move","issuer":"c","params":{"cell":{"x":1,"y":1}}}"#).is_err());
        assert!(parse(r#"{"v":1,"kind":"fly","issuer":"c"}"#).is_err());
    }

    #[test]
    fn params_must_fit_the_kind() {
        let m = CommandMessage::new(CommandKind::Scan, "c").target("r");
        assert_eq!(m.directive(), Err(crate::sim::reason::INVALID_PARAMS));
        let m = CommandMessage::new(CommandKind::Idle, "c");
        assert_eq!(m.directive(), Err(crate::sim::reason::INVALID_PARAMS));
        let m = CommandMessage::new(CommandKind::Pause, "c").target("r");
        assert_eq!(m.directive(), Err(crate::sim::reason::INVALID_PARAMS));
        let mut m = CommandMessage::new(CommandKind::Pause, "c");
        m.v = 2;
        assert_eq!(m.directive(), Err(reason::UNSUPPORTED_VERSION));
    }

    #[test]
    fn ack_shapes() {
        assert_eq!(serde_json::to_string(&Ack::accepted(4)).unwrap(), r#"{"v":1,"status":"accepted","seq":4}"#);
        assert_eq!(
            serde_json::to_string(&Ack::rejected("unknown-agent")).unwrap(),
            r#"{"v":1,"status":"rejected","reason":"unknown-agent"}"#
        );
    }

    #[test]
    fn log_entries_round_trip() {
        let e = CommandLogEntry {
            seq: 2,
            tick: 5,
            directive: Directive::Input {
                input: Input::OverrideGate { issuer: "c".into() },
            },
        };
        let text = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<CommandLogEntry>(&text).unwrap(), e);
        let p = CommandLogEntry {
            seq: 3,
            tick: 5,
            directive: Directive::Pause { issuer: "c".into() },
        };
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(text, r#"{"seq":3,"tick":5,"kind":"pause","issuer":"c"}"#);
        assert_eq!(inputs_by_tick(&[e.clone(), p])[&5], vec![Input::OverrideGate { issuer: "c".into() }]);
    }
}
