//! Directed trust edges, their running estimates, integrity judgments and
//! reputation, system trust, satisficing gates and the trust ladder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::AgentId;
use crate::scenario::{Aggregation, GateSpec, LadderSpec, TrustTriple};
use crate::world::{Action, TeammateImpact};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("an agent cannot trust itself (`{0}`)")]
    SelfLoop(AgentId),
    #[error("trust value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("unknown edge {0} -> {1}")]
    UnknownEdge(AgentId, AgentId),
    #[error("system trust needs at least two members")]
    TooFewMembers,
    #[error("unknown member `{0}`")]
    UnknownMember(AgentId),
    #[error("judgment about `{actor}` applied to edge towards `{trustee}`")]
    ActorMismatch { actor: AgentId, trustee: AgentId },
    #[error("no prediction registered for {trustor} -> {trustee}")]
    NoPrediction { trustor: AgentId, trustee: AgentId },
    #[error("judged action {0} was not available")]
    NotAvailable(Action),
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustEdge {
    pub trustor: AgentId,
    pub trustee: AgentId,
    pub capability: f64,
    pub predictability: f64,
    pub integrity: f64,
}

impl TrustEdge {
    pub fn new(trustor: AgentId, trustee: AgentId, values: TrustTriple) -> Result<Self, TrustError> {
        if trustor == trustee {
            return Err(TrustError::SelfLoop(trustor));
        }
        for v in [values.capability, values.predictability, values.integrity] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrustError::OutOfRange(v));
            }
        }
        Ok(Self {
            trustor,
            trustee,
            capability: values.capability,
            predictability: values.predictability,
            integrity: values.integrity,
        })
    }

    pub fn key(&self) -> (AgentId, AgentId) {
        (self.trustor.clone(), self.trustee.clone())
    }

    pub fn element(&self, e: Element) -> f64 {
        match e {
            Element::Capability => self.capability,
            Element::Predictability => self.predictability,
            Element::Integrity => self.integrity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Element {
    Capability,
    Predictability,
    Integrity,
}

impl Element {
    pub const ALL: [Element; 3] = [Element::Capability, Element::Predictability, Element::Integrity];
}

fn ema(v: f64, target: f64, alpha: f64) -> f64 {
    clamp01(v + alpha * (target - v))
}

/// Moves capability towards 1 on success and 0 on failure.
pub fn update_capability(edge: &TrustEdge, success: bool, alpha: f64) -> TrustEdge {
    let target = if success { 1.0 } else { 0.0 };
    TrustEdge {
        capability: ema(edge.capability, target, alpha),
        ..edge.clone()
    }
}

pub fn update_predictability<T: PartialEq>(
    edge: &TrustEdge,
    predicted: Option<&T>,
    observed: &T,
    alpha: f64,
) -> Result<TrustEdge, TrustError> {
    let predicted = predicted.ok_or_else(|| TrustError::NoPrediction {
        trustor: edge.trustor.clone(),
        trustee: edge.trustee.clone(),
    })?;
    let target = if predicted == observed { 1.0 } else { 0.0 };
    Ok(TrustEdge {
        predictability: ema(edge.predictability, target, alpha),
        ..edge.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    PrincipleViolation,
    SelfishWithTeamAlternative,
    SelfishNoImpact,
    TeamBenefit,
    ExertionForTeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityJudgment {
    pub actor: AgentId,
    /// Log seq of the judged event.
    pub event: u64,
    pub score: f64,
    pub basis: Basis,
}

/// What an observer knows about one action open to the actor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAppraisal {
    pub action: Action,
    pub impact: TeammateImpact,
    pub cost: f64,
    pub violations: Vec<String>,
}

impl ActionAppraisal {
    fn helps_compliantly(&self) -> bool {
        self.impact == TeammateImpact::Helps && self.violations.is_empty()
    }
}

/// Scores the taken action against the rule table. `alternatives` is the
/// full opportunity set and must contain the taken action.
pub fn judge_integrity(
    actor: &AgentId,
    event: u64,
    taken: &ActionAppraisal,
    alternatives: &[ActionAppraisal],
    exertion_cost: f64,
) -> Result<IntegrityJudgment, TrustError> {
    if !alternatives.iter().any(|a| a.action == taken.action) {
        return Err(TrustError::NotAvailable(taken.action.clone()));
    }
    let (score, basis) = if !taken.violations.is_empty() {
        (-1.0, Basis::PrincipleViolation)
    } else if taken.impact == TeammateImpact::Helps {
        if taken.cost > exertion_cost {
            (1.0, Basis::ExertionForTeam)
        } else {
            (0.5, Basis::TeamBenefit)
        }
    } else if taken.impact == TeammateImpact::Harms
        || alternatives.iter().any(ActionAppraisal::helps_compliantly)
    {
        (-0.5, Basis::SelfishWithTeamAlternative)
    } else {
        (0.0, Basis::SelfishNoImpact)
    };
    Ok(IntegrityJudgment {
        actor: actor.clone(),
        event,
        score,
        basis,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reputation {
    pub observer: AgentId,
    pub actor: AgentId,
    pub history: Vec<IntegrityJudgment>,
    pub summary: f64,
}

impl Reputation {
    pub fn new(observer: AgentId, actor: AgentId) -> Self {
        Self {
            observer,
            actor,
            history: Vec::new(),
            summary: 0.5,
        }
    }

    /// 0.5 for an empty history, otherwise 0.5 plus half the mean score.
    pub fn summarize(history: &[IntegrityJudgment]) -> f64 {
        if history.is_empty() {
            return 0.5;
        }
        let mean = history.iter().map(|j| j.score).sum::<f64>() / history.len() as f64;
        clamp01(0.5 + mean / 2.0)
    }
}

pub fn update_integrity(
    edge: &TrustEdge,
    judgment: &IntegrityJudgment,
    reputation: &Reputation,
    beta: f64,
) -> Result<(TrustEdge, Reputation), TrustError> {
    if judgment.actor != edge.trustee || reputation.actor != edge.trustee {
        return Err(TrustError::ActorMismatch {
            actor: judgment.actor.clone(),
            trustee: edge.trustee.clone(),
        });
    }
    let edge = TrustEdge {
        integrity: clamp01(edge.integrity + beta * judgment.score),
        ..edge.clone()
    };
    let mut rep = reputation.clone();
    rep.history.push(judgment.clone());
    rep.summary = Reputation::summarize(&rep.history);
    Ok((edge, rep))
}

pub fn component_trust(edge: &TrustEdge, aggregation: Aggregation) -> f64 {
    let (c, p, i) = (edge.capability, edge.predictability, edge.integrity);
    match aggregation {
        Aggregation::Min => c.min(p).min(i),
        Aggregation::Mean => (c + p + i) / 3.0,
    }
}

/// Every ordered pair of a roster, keyed by (trustor, trustee).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustNetwork {
    roster: Vec<AgentId>,
    edges: BTreeMap<(AgentId, AgentId), TrustEdge>,
}

impl TrustNetwork {
    /// Builds the complete directed graph. `prior` supplies the starting
    /// values for each ordered pair.
    pub fn complete(
        roster: &[AgentId],
        prior: impl Fn(&AgentId, &AgentId) -> TrustTriple,
    ) -> Result<Self, TrustError> {
        let mut edges = BTreeMap::new();
        for a in roster {
            for b in roster {
                if a != b {
                    let e = TrustEdge::new(a.clone(), b.clone(), prior(a, b))?;
                    edges.insert(e.key(), e);
                }
            }
        }
        Ok(Self {
            roster: roster.to_vec(),
            edges,
        })
    }

    pub fn roster(&self) -> &[AgentId] {
        &self.roster
    }

    pub fn edge(&self, trustor: &AgentId, trustee: &AgentId) -> Result<&TrustEdge, TrustError> {
        self.edges
            .get(&(trustor.clone(), trustee.clone()))
            .ok_or_else(|| TrustError::UnknownEdge(trustor.clone(), trustee.clone()))
    }

    pub fn set(&mut self, edge: TrustEdge) -> Result<(), TrustError> {
        let slot = self
            .edges
            .get_mut(&edge.key())
            .ok_or_else(|| TrustError::UnknownEdge(edge.trustor.clone(), edge.trustee.clone()))?;
        *slot = edge;
        Ok(())
    }

    /// Edges in (trustor, trustee) roster order.
    pub fn edges(&self) -> Vec<&TrustEdge> {
        let mut out = Vec::with_capacity(self.edges.len());
        for a in &self.roster {
            for b in &self.roster {
                if a != b {
                    out.push(&self.edges[&(a.clone(), b.clone())]);
                }
            }
        }
        out
    }
}

/// The weakest component trust among ordered pairs of `members`.
pub fn system_trust(
    network: &TrustNetwork,
    members: &[AgentId],
    aggregation: Aggregation,
) -> Result<f64, TrustError> {
    for m in members {
        if !network.roster.contains(m) {
            return Err(TrustError::UnknownMember(m.clone()));
        }
    }
    let mut distinct = members.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(TrustError::TooFewMembers);
    }
    let mut lowest = f64::INFINITY;
    for a in &distinct {
        for b in &distinct {
            if a != b {
                lowest = lowest.min(component_trust(network.edge(a, b)?, aggregation));
            }
        }
    }
    Ok(lowest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deficiency {
    pub trustor: AgentId,
    pub trustee: AgentId,
    pub element: Element,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "deficiencies", rename_all = "kebab-case")]
pub enum GateDecision {
    Proceed,
    Blocked(Vec<Deficiency>),
}

/// Checks each required edge against the gate's per-element minima. A
/// value meets its threshold when it is at least as large.
pub fn satisfice(network: &TrustNetwork, gate: &GateSpec) -> Result<GateDecision, TrustError> {
    let mut missing = Vec::new();
    for (a, b) in &gate.required_edges {
        let edge = network.edge(a, b)?;
        for (element, threshold) in [
            (Element::Capability, gate.capability),
            (Element::Predictability, gate.predictability),
            (Element::Integrity, gate.integrity),
        ] {
            let value = edge.element(element);
            if value < threshold {
                missing.push(Deficiency {
                    trustor: a.clone(),
                    trustee: b.clone(),
                    element,
                    value,
                    threshold,
                });
            }
        }
    }
    Ok(if missing.is_empty() {
        GateDecision::Proceed
    } else {
        GateDecision::Blocked(missing)
    })
}

/// Rung for a fresh edge: plain quantization.
pub fn initial_rung(trust: f64, ladder: LadderSpec) -> u8 {
    let r = ladder.rungs as f64;
    ((trust * r).floor() as i64).clamp(0, ladder.rungs as i64 - 1) as u8
}

/// Moves up to the highest rung whose lower boundary `trust` exceeds by
/// more than the hysteresis, or down to the lowest rung whose upper
/// boundary it falls short of by more than the hysteresis.
pub fn ladder_position(trust: f64, previous: u8, ladder: LadderSpec) -> u8 {
    let r = ladder.rungs as f64;
    let h = ladder.hysteresis;
    let top = ladder.rungs - 1;
    if let Some(up) = (previous + 1..=top).rev().find(|&k| trust > k as f64 / r + h) {
        return up;
    }
    if let Some(down) = (0..previous).find(|&k| trust < (k + 1) as f64 / r - h) {
        return down;
    }
    previous.min(top)
}
