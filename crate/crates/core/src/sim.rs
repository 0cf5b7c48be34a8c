//! The tick loop. One `Simulation` owns the world, every observer's belief
//! network, the trust network and the log; `step` advances one tick.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbn::BeliefNetwork;
use crate::ids::{AgentId, Cell};
use crate::log::{
    ActionSource, CommandRecord, EventRecord, Expectation, LogRecord, OverrideRecord, RatingRecord,
};
use crate::policy::{choose_action, predict_action, rate_teammates};
use crate::rng::stream;
use crate::scenario::{Scenario, ScenarioError};
use crate::teammate::{observation_events, observer_network, predicted_capability, rating_event};
use crate::trust::{
    component_trust, initial_rung, judge_integrity, ladder_position, satisfice, system_trust,
    update_capability, update_integrity, update_predictability, ActionAppraisal, GateDecision,
    IntegrityJudgment, Reputation, TrustEdge, TrustNetwork,
};
use crate::world::{
    action_cost, action_impact, available_actions, check_principles, matching_tasks, progress_by_goal,
    task_for, apply_action, ARTag, Action, ActionKind, AgentKind, Control, EventMeta, Outcome,
    WorldError, WorldState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("ticks must be at least 1")]
    ZeroTicks,
    #[error("replay diverged at seq {seq}: {message}")]
    Replay { seq: u64, message: String },
    #[error("internal: {0}")]
    Internal(String),
}

fn internal(e: impl std::fmt::Display) -> SimError {
    SimError::Internal(e.to_string())
}

/// An input from outside the policies, applied at the next tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Input {
    Command {
        issuer: AgentId,
        agent: AgentId,
        action: ActionKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object: Option<String>,
    },
    Rating {
        rater: AgentId,
        ratee: AgentId,
        expectation: Expectation,
    },
    OverrideGate {
        issuer: AgentId,
    },
}

/// Machine-readable input rejection reasons.
pub mod reason {
    pub const UNKNOWN_AGENT: &str = "unknown-agent";
    pub const UNKNOWN_ISSUER: &str = "unknown-issuer";
    pub const UNAUTHORIZED: &str = "unauthorized";
    pub const INVALID_PARAMS: &str = "invalid-params";
    pub const NO_OPEN_PROMPT: &str = "no-open-prompt";
    pub const ALREADY_RATED: &str = "already-rated";
    pub const NO_BLOCKED_GATE: &str = "no-blocked-gate";
    pub const BUSY: &str = "busy";
}

/// Static checks of a command: ids, authority and action shape. Returns the
/// concrete action. Only the coordinator may command others; an externally
/// controlled field agent may command itself.
pub fn validate_command(
    scenario: &Scenario,
    issuer: &AgentId,
    agent: &AgentId,
    kind: ActionKind,
    object: Option<&str>,
) -> Result<Action, &'static str> {
    let who = scenario.agent(issuer).ok_or(reason::UNKNOWN_ISSUER)?;
    let target = scenario.agent(agent).ok_or(reason::UNKNOWN_AGENT)?;
    let allowed = who.kind == AgentKind::HumanCoordinator
        || (issuer == agent && target.controlled_by == Control::External);
    if !allowed {
        return Err(reason::UNAUTHORIZED);
    }
    if !target.kind.in_world() {
        return Err(reason::INVALID_PARAMS);
    }
    let action = Action::from_parts(kind, object).map_err(|_| reason::INVALID_PARAMS)?;
    if let Action::MoveTo(c) = &action {
        let g = &scenario.spec().grid;
        if c.x >= g.width || c.y >= g.height {
            return Err(reason::INVALID_PARAMS);
        }
    }
    Ok(action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub rater: AgentId,
    pub ratee: AgentId,
    pub opened: u64,
    /// What the rater's policy would answer; recorded if the prompt expires.
    pub default: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateView {
    pub id: String,
    #[serde(flatten)]
    pub decision: GateDecision,
    pub passed_at: Option<u64>,
    pub overridden_at: Option<u64>,
}

impl GateView {
    /// `proceed`, `overridden` or `blocked`.
    pub fn label(&self) -> &'static str {
        match (&self.decision, self.overridden_at) {
            (GateDecision::Proceed, _) => "proceed",
            (GateDecision::Blocked(_), Some(_)) => "overridden",
            (GateDecision::Blocked(_), None) => "blocked",
        }
    }

    fn settled(&self) -> bool {
        self.passed_at.is_some() || self.overridden_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustDelta {
    pub capability: f64,
    pub predictability: f64,
    pub integrity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    pub trustor: AgentId,
    pub trustee: AgentId,
    pub capability: f64,
    pub predictability: f64,
    pub integrity: f64,
    pub rung: u8,
    pub component: f64,
    /// Change since the previous snapshot.
    pub delta: TrustDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub id: AgentId,
    pub kind: AgentKind,
    pub controlled_by: Control,
    pub position: Option<Cell>,
    pub energy: Option<f64>,
    pub recharging_until: Option<u64>,
    pub points: f64,
    pub available: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub agents: Vec<AgentView>,
    pub tags: Vec<ARTag>,
    pub edges: Vec<EdgeView>,
    pub system_trust: f64,
    pub gates: Vec<GateView>,
    pub goal_progress: BTreeMap<AgentId, BTreeMap<String, f64>>,
    /// Each observer's reputation-conditioned capability prediction per teammate.
    pub predicted_capability: BTreeMap<AgentId, BTreeMap<AgentId, f64>>,
    pub ratings: Vec<RatingRecord>,
    pub prompts: Vec<Prompt>,
}

impl Snapshot {
    pub fn edge(&self, trustor: &str, trustee: &str) -> Option<&EdgeView> {
        self.edges
            .iter()
            .find(|e| e.trustor.as_str() == trustor && e.trustee.as_str() == trustee)
    }

    pub fn gate(&self, id: &str) -> Option<&GateView> {
        self.gates.iter().find(|g| g.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trajectory serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

struct AgentRngs {
    policy: ChaCha8Rng,
    outcome: ChaCha8Rng,
}

pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    world: WorldState,
    trust: TrustNetwork,
    rungs: BTreeMap<(AgentId, AgentId), u8>,
    beliefs: BTreeMap<AgentId, BeliefNetwork>,
    reputations: BTreeMap<(AgentId, AgentId), Reputation>,
    last_task: BTreeMap<AgentId, BTreeMap<AgentId, String>>,
    completed: BTreeMap<AgentId, BTreeSet<String>>,
    gates: Vec<GateView>,
    prompts: Vec<Prompt>,
    rngs: BTreeMap<AgentId, AgentRngs>,
    pending: Vec<Input>,
    log: Vec<LogRecord>,
    snapshots: Vec<Snapshot>,
}

impl Simulation {
    /// Builds the initial state and its tick-0 snapshot. The seed falls
    /// back to the scenario's, then 0.
    pub fn new(scenario: Scenario, seed: Option<u64>) -> Result<Self, SimError> {
        let seed = seed.or(scenario.spec().seed).unwrap_or(0);
        let world = WorldState::from_scenario(&scenario);
        let roster = scenario.roster();
        let c = scenario.constants();
        let trust = TrustNetwork::complete(&roster, |a, b| {
            c.trust_priors
                .iter()
                .find(|p| &p.trustor == a && &p.trustee == b)
                .map(|p| p.values())
                .unwrap_or(c.initial_trust)
        })
        .map_err(internal)?;
        let mut rungs = BTreeMap::new();
        let mut reputations = BTreeMap::new();
        for e in trust.edges() {
            rungs.insert(e.key(), initial_rung(component_trust(e, c.aggregation), c.ladder));
            reputations.insert(e.key(), Reputation::new(e.trustor.clone(), e.trustee.clone()));
        }
        let mut beliefs = BTreeMap::new();
        let mut rngs = BTreeMap::new();
        for a in &roster {
            beliefs.insert(a.clone(), observer_network(&scenario, a).map_err(internal)?);
            rngs.insert(
                a.clone(),
                AgentRngs {
                    policy: stream(seed, &format!("policy/{a}")),
                    outcome: stream(seed, &format!("outcome/{a}")),
                },
            );
        }
        let gates = scenario
            .thresholds()
            .gates
            .iter()
            .map(|g| GateView {
                id: g.id.clone(),
                decision: GateDecision::Proceed,
                passed_at: None,
                overridden_at: None,
            })
            .collect();
        let mut sim = Self {
            completed: roster.iter().map(|a| (a.clone(), BTreeSet::new())).collect(),
            last_task: roster.iter().map(|a| (a.clone(), BTreeMap::new())).collect(),
            scenario,
            seed,
            world,
            trust,
            rungs,
            beliefs,
            reputations,
            gates,
            prompts: Vec::new(),
            rngs,
            pending: Vec::new(),
            log: Vec::new(),
            snapshots: Vec::new(),
        };
        sim.evaluate_gates()?;
        let snap = sim.snapshot(Vec::new())?;
        sim.snapshots.push(snap);
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick(&self) -> u64 {
        self.world.tick
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn trust(&self) -> &TrustNetwork {
        &self.trust
    }

    pub fn beliefs(&self, observer: &AgentId) -> Option<&BeliefNetwork> {
        self.beliefs.get(observer)
    }

    pub fn reputation(&self, observer: &AgentId, actor: &AgentId) -> Option<&Reputation> {
        self.reputations.get(&(observer.clone(), actor.clone()))
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn latest(&self) -> &Snapshot {
        self.snapshots.last().expect("tick-0 snapshot exists")
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            seed: self.seed,
            snapshots: self.snapshots.clone(),
        }
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn pending(&self) -> &[Input] {
        &self.pending
    }

    /// Checks an input against the current state and the queue, so that a
    /// queued input is not refused later for a reason known now.
    pub fn check_input(&self, input: &Input) -> Result<(), &'static str> {
        match input {
            Input::Command {
                issuer,
                agent,
                action,
                object,
            } => {
                validate_command(&self.scenario, issuer, agent, *action, object.as_deref())?;
                let queued = self.pending.iter().any(|p| matches!(p,
                    Input::Command { agent: a, .. } if a == agent));
                if queued {
                    return Err(reason::BUSY);
                }
                Ok(())
            }
            Input::Rating { rater, ratee, .. } => {
                if self.scenario.agent(rater).is_none() || self.scenario.agent(ratee).is_none() {
                    return Err(reason::UNKNOWN_AGENT);
                }
                if !self.prompts.iter().any(|p| &p.rater == rater && &p.ratee == ratee) {
                    let answered = self.log.iter().rev().any(|r| matches!(r,
                        LogRecord::Rating(x) if &x.rater == rater && &x.ratee == ratee
                            && x.source == ActionSource::Command
                            && self.last_interval().is_some_and(|t| x.tick >= t)));
                    return Err(if answered { reason::ALREADY_RATED } else { reason::NO_OPEN_PROMPT });
                }
                let queued = self.pending.iter().any(|p| matches!(p,
                    Input::Rating { rater: r, ratee: e, .. } if r == rater && e == ratee));
                if queued {
                    return Err(reason::ALREADY_RATED);
                }
                Ok(())
            }
            Input::OverrideGate { issuer } => {
                let who = self.scenario.agent(issuer).ok_or(reason::UNKNOWN_ISSUER)?;
                if who.kind != AgentKind::HumanCoordinator {
                    return Err(reason::UNAUTHORIZED);
                }
                let queued = self.pending.iter().filter(|p| matches!(p, Input::OverrideGate { .. })).count();
                let blocked = self
                    .gates
                    .iter()
                    .filter(|g| !g.settled() && matches!(g.decision, GateDecision::Blocked(_)))
                    .count();
                if blocked <= queued {
                    return Err(reason::NO_BLOCKED_GATE);
                }
                Ok(())
            }
        }
    }

    fn last_interval(&self) -> Option<u64> {
        let k = self.scenario.spec().rating_interval;
        let t = self.world.tick / k * k;
        (t > 0).then_some(t)
    }

    /// Queues an input for the next tick. Inputs are not validated here;
    /// invalid commands are logged as rejected when drained.
    pub fn enqueue(&mut self, input: Input) {
        self.pending.push(input);
    }

    fn next_seq(&self) -> u64 {
        self.log.len() as u64 + 1
    }

    fn push(&mut self, rec: LogRecord) {
        self.log.push(rec);
    }

    fn field_roster(&self) -> Vec<AgentId> {
        self.scenario
            .agents()
            .iter()
            .filter(|a| a.kind.in_world())
            .map(|a| a.id.clone())
            .collect()
    }

    /// Advances one tick and returns the records it appended.
    pub fn step(&mut self) -> Result<Vec<LogRecord>, SimError> {
        let start = self.log.len();
        self.world.begin_tick(&self.scenario);
        let tick = self.world.tick;
        let mut ratings = Vec::new();

        // Drain inputs in arrival order.
        let mut commands: BTreeMap<AgentId, (AgentId, Action)> = BTreeMap::new();
        for input in std::mem::take(&mut self.pending) {
            match input {
                Input::Command {
                    issuer,
                    agent,
                    action,
                    object,
                } => {
                    let verdict = validate_command(&self.scenario, &issuer, &agent, action, object.as_deref())
                        .and_then(|a| {
                            if commands.contains_key(&agent) {
                                Err(reason::BUSY)
                            } else {
                                Ok(a)
                            }
                        });
                    let rec = CommandRecord {
                        seq: self.next_seq(),
                        tick,
                        issuer: issuer.clone(),
                        agent: agent.clone(),
                        action,
                        object,
                        accepted: verdict.is_ok(),
                        reason: verdict.as_ref().err().map(|r| r.to_string()),
                    };
                    self.push(LogRecord::Command(rec));
                    if let Ok(a) = verdict {
                        commands.insert(agent, (issuer, a));
                    }
                }
                Input::Rating {
                    rater,
                    ratee,
                    expectation,
                } => {
                    let Some(i) = self.prompts.iter().position(|p| p.rater == rater && p.ratee == ratee) else {
                        continue;
                    };
                    self.prompts.remove(i);
                    let rec = self.record_rating(tick, rater, ratee, expectation, ActionSource::Command)?;
                    ratings.push(rec);
                }
                Input::OverrideGate { issuer } => {
                    let coordinator = self
                        .scenario
                        .agent(&issuer)
                        .is_some_and(|a| a.kind == AgentKind::HumanCoordinator);
                    let target = self
                        .gates
                        .iter()
                        .position(|g| !g.settled() && matches!(g.decision, GateDecision::Blocked(_)));
                    if let (true, Some(i)) = (coordinator, target) {
                        self.gates[i].overridden_at = Some(tick);
                        let rec = OverrideRecord {
                            seq: self.next_seq(),
                            tick,
                            issuer,
                            gate: self.gates[i].id.clone(),
                        };
                        self.push(LogRecord::GateOverride(rec));
                    }
                }
            }
        }

        // Every observer registers a prediction for every field teammate.
        let roster = self.scenario.roster();
        let field = self.field_roster();
        let mut predictions: BTreeMap<(AgentId, AgentId), ActionKind> = BTreeMap::new();
        for obs in &roster {
            let net = &self.beliefs[obs];
            for tm in field.iter().filter(|t| *t != obs) {
                let last = self.last_task[obs].get(tm).map(String::as_str);
                let p = predict_action(&self.world, &self.scenario, net, tm, last).map_err(internal)?;
                predictions.insert((obs.clone(), tm.clone()), p.kind());
            }
        }

        // Decide and act in roster order.
        for agent in &field {
            let spec = self.scenario.agent(agent).expect("roster agent");
            let (action, source, issuer) = match commands.remove(agent) {
                Some((issuer, a)) => (a, ActionSource::Command, issuer),
                None if spec.controlled_by == Control::External => {
                    (Action::Idle, ActionSource::Default, agent.clone())
                }
                None => {
                    let lambda = self.scenario.lambda(agent);
                    let rng = &mut self.rngs.get_mut(agent).expect("rng per agent").policy;
                    let a = choose_action(&self.world, &self.scenario, agent, lambda, rng).map_err(internal)?;
                    (a, ActionSource::Policy, agent.clone())
                }
            };
            self.act(agent, action, source, issuer, &predictions)?;
        }

        if tick % self.scenario.spec().rating_interval == 0 {
            ratings.extend(self.rating_round(tick)?);
        }

        self.evaluate_gates()?;
        let snap = self.snapshot(ratings)?;
        self.snapshots.push(snap);
        Ok(self.log[start..].to_vec())
    }

    fn act(
        &mut self,
        agent: &AgentId,
        action: Action,
        source: ActionSource,
        issuer: AgentId,
        predictions: &BTreeMap<(AgentId, AgentId), ActionKind>,
    ) -> Result<(), SimError> {
        let before = self.world.clone();
        let seq = self.next_seq();
        let draw: f64 = self.rngs.get_mut(agent).expect("rng per agent").outcome.random();
        let meta = EventMeta {
            seq,
            source,
            issuer: issuer.clone(),
        };
        let record = match apply_action(&before, &self.scenario, agent, &action, draw, meta) {
            Ok((next, rec, _)) => {
                self.world = next;
                rec
            }
            Err(WorldError::Unavailable { .. }) => EventRecord {
                seq,
                agent_id: agent.clone(),
                time: before.tick,
                location: before.agent(agent).and_then(|a| a.position).expect("field agent"),
                object: action.object(),
                action: action.kind(),
                outcome: Outcome::Rejected,
                source,
                issuer,
            },
            Err(e) => return Err(internal(e)),
        };
        self.push(LogRecord::Event(record.clone()));
        match record.outcome {
            Outcome::Rejected => Ok(()),
            Outcome::Success => {
                let done = self.completed.get_mut(agent).expect("agent");
                done.extend(matching_tasks(&self.scenario, &action).iter().map(|t| t.id.clone()));
                self.observe(&before, &action, &record, predictions)
            }
            Outcome::Failure => self.observe(&before, &action, &record, predictions),
        }
    }

    fn sees(&self, observer: &AgentId, at: Cell) -> bool {
        let Some(radius) = self.scenario.constants().observation_radius else {
            return true;
        };
        match self.world.agent(observer).and_then(|a| a.position) {
            Some(pos) => pos.manhattan(at) <= radius,
            None => true,
        }
    }

    /// Belief, integrity, capability and predictability updates for one
    /// applied event. `before` is the world the actor decided in.
    fn observe(
        &mut self,
        before: &WorldState,
        action: &Action,
        record: &EventRecord,
        predictions: &BTreeMap<(AgentId, AgentId), ActionKind>,
    ) -> Result<(), SimError> {
        let sc = &self.scenario;
        let c = sc.constants();
        let actor = &record.agent_id;
        let commanded = record.source == ActionSource::Command;
        let judged = if commanded { &record.issuer } else { actor };
        let appraise = |a: &Action| -> Result<ActionAppraisal, SimError> {
            Ok(ActionAppraisal {
                action: a.clone(),
                impact: action_impact(sc, a),
                cost: action_cost(sc, a),
                violations: check_principles(before, sc, actor, a, commanded, sc.principles()).map_err(internal)?,
            })
        };
        let alternatives = available_actions(before, sc, actor)
            .map_err(internal)?
            .iter()
            .map(appraise)
            .collect::<Result<Vec<_>, _>>()?;
        let taken = appraise(action)?;
        let judgment: IntegrityJudgment =
            judge_integrity(judged, record.seq, &taken, &alternatives, sc.thresholds().exertion_cost)
                .map_err(internal)?;
        let events = observation_events(sc, actor, action, c.observation_weight, &record.time.to_string());
        let task = task_for(sc, action).map(|t| t.id.clone());
        let rates_capability = matches!(record.action, ActionKind::Scan | ActionKind::Assist);
        let success = record.outcome == Outcome::Success;
        let (alpha, beta, share) = (c.alpha, c.beta, c.share_reputation);

        for obs in sc.roster() {
            let sees = &obs == actor || self.sees(&obs, record.location);
            if sees && &obs != actor {
                let net = self.beliefs.get_mut(&obs).expect("observer network");
                net.apply_events(&events).map_err(internal)?;
                let last = self.last_task.get_mut(&obs).expect("observer");
                match &task {
                    Some(t) => last.insert(actor.clone(), t.clone()),
                    None => last.remove(actor),
                };
                let mut edge: TrustEdge = self.trust.edge(&obs, actor).map_err(internal)?.clone();
                if rates_capability {
                    edge = update_capability(&edge, success, alpha);
                }
                let predicted = predictions.get(&(obs.clone(), actor.clone()));
                if predicted.is_some() {
                    edge = update_predictability(&edge, predicted, &record.action, alpha).map_err(internal)?;
                }
                self.trust.set(edge).map_err(internal)?;
            }
            if &obs != judged && (sees || share) {
                let key = (obs.clone(), judged.clone());
                let edge = self.trust.edge(&obs, judged).map_err(internal)?;
                let (edge, rep) = update_integrity(edge, &judgment, &self.reputations[&key], beta).map_err(internal)?;
                self.trust.set(edge).map_err(internal)?;
                self.reputations.insert(key, rep);
            }
        }
        Ok(())
    }

    fn record_rating(
        &mut self,
        tick: u64,
        rater: AgentId,
        ratee: AgentId,
        expectation: Expectation,
        source: ActionSource,
    ) -> Result<RatingRecord, SimError> {
        let rec = RatingRecord {
            seq: self.next_seq(),
            tick,
            rater: rater.clone(),
            ratee: ratee.clone(),
            expectation,
            source,
        };
        self.push(LogRecord::Rating(rec.clone()));
        let w = self.scenario.constants().rating_weight;
        if let Some(ev) = rating_event(&ratee, expectation, w, &tick.to_string()) {
            let net = self.beliefs.get_mut(&rater).expect("rater network");
            if net.contains(&ev.node) {
                net.protocol_update(&ev).map_err(internal)?;
            }
        }
        Ok(rec)
    }

    fn rating_round(&mut self, tick: u64) -> Result<Vec<RatingRecord>, SimError> {
        let mut out = Vec::new();
        for p in std::mem::take(&mut self.prompts) {
            out.push(self.record_rating(tick, p.rater, p.ratee, p.default, ActionSource::Default)?);
        }
        for rater in self.scenario.roster() {
            let net = &self.beliefs[&rater];
            let answers = rate_teammates(&self.scenario, &rater, net, tick, &self.last_task[&rater])
                .map_err(internal)?;
            let external = self.scenario.agent(&rater).expect("roster").controlled_by == Control::External;
            for (ratee, expectation) in answers {
                if external {
                    self.prompts.push(Prompt {
                        rater: rater.clone(),
                        ratee,
                        opened: tick,
                        default: expectation,
                    });
                } else {
                    out.push(self.record_rating(tick, rater.clone(), ratee, expectation, ActionSource::Policy)?);
                }
            }
        }
        Ok(out)
    }

    fn evaluate_gates(&mut self) -> Result<(), SimError> {
        let tick = self.world.tick;
        for (i, spec) in self.scenario.thresholds().gates.iter().enumerate() {
            let d = satisfice(&self.trust, spec).map_err(internal)?;
            let g = &mut self.gates[i];
            if d == GateDecision::Proceed && g.passed_at.is_none() {
                g.passed_at = Some(tick);
            }
            g.decision = d;
        }
        let c = self.scenario.constants();
        for e in self.trust.edges() {
            let rung = self.rungs.get_mut(&e.key()).expect("rung per edge");
            *rung = ladder_position(component_trust(e, c.aggregation), *rung, c.ladder);
        }
        Ok(())
    }

    fn snapshot(&self, ratings: Vec<RatingRecord>) -> Result<Snapshot, SimError> {
        let c = self.scenario.constants();
        let prev = self.snapshots.last();
        let mut agents = Vec::new();
        for a in &self.world.agents {
            let available = if a.kind.in_world() {
                available_actions(&self.world, &self.scenario, &a.id).map_err(internal)?
            } else {
                Vec::new()
            };
            agents.push(AgentView {
                id: a.id.clone(),
                kind: a.kind,
                controlled_by: a.controlled_by,
                position: a.position,
                energy: a.energy,
                recharging_until: a.recharging_until,
                points: a.points,
                available,
            });
        }
        let edges = self
            .trust
            .edges()
            .into_iter()
            .map(|e| {
                let before = prev.and_then(|s| s.edge(e.trustor.as_str(), e.trustee.as_str()));
                let d = |now: f64, f: fn(&EdgeView) -> f64| before.map(|b| now - f(b)).unwrap_or(0.0);
                EdgeView {
                    trustor: e.trustor.clone(),
                    trustee: e.trustee.clone(),
                    capability: e.capability,
                    predictability: e.predictability,
                    integrity: e.integrity,
                    rung: self.rungs[&e.key()],
                    component: component_trust(e, c.aggregation),
                    delta: TrustDelta {
                        capability: d(e.capability, |b| b.capability),
                        predictability: d(e.predictability, |b| b.predictability),
                        integrity: d(e.integrity, |b| b.integrity),
                    },
                }
            })
            .collect();
        let system = system_trust(&self.trust, &self.scenario.system_members(), c.aggregation).map_err(internal)?;
        let goal_progress = self
            .completed
            .iter()
            .filter(|(a, _)| self.scenario.agent(a).is_some_and(|s| s.kind.in_world()))
            .map(|(a, done)| (a.clone(), progress_by_goal(&self.scenario, done)))
            .collect();
        let mut predicted = BTreeMap::new();
        for (obs, net) in &self.beliefs {
            let mut row = BTreeMap::new();
            for tm in self.field_roster().iter().filter(|t| *t != obs) {
                row.insert(tm.clone(), predicted_capability(net, tm).map_err(internal)?);
            }
            predicted.insert(obs.clone(), row);
        }
        Ok(Snapshot {
            tick: self.world.tick,
            agents,
            tags: self.world.tags.clone(),
            edges,
            system_trust: system,
            gates: self.gates.clone(),
            goal_progress,
            predicted_capability: predicted,
            ratings,
            prompts: self.prompts.clone(),
        })
    }
}

/// Runs `ticks` steps with no external inputs.
pub fn run(scenario: Scenario, seed: Option<u64>, ticks: u64) -> Result<Simulation, SimError> {
    run_with_inputs(scenario, seed, ticks, &BTreeMap::new())
}

/// Runs `ticks` steps; `inputs[t]` is queued just before step `t`.
pub fn run_with_inputs(
    scenario: Scenario,
    seed: Option<u64>,
    ticks: u64,
    inputs: &BTreeMap<u64, Vec<Input>>,
) -> Result<Simulation, SimError> {
    if ticks == 0 {
        return Err(SimError::ZeroTicks);
    }
    let mut sim = Simulation::new(scenario, seed)?;
    for t in 1..=ticks {
        for input in inputs.get(&t).into_iter().flatten() {
            sim.enqueue(input.clone());
        }
        sim.step()?;
    }
    Ok(sim)
}

/// The external inputs a logged record stands for, if any.
pub fn input_of(record: &LogRecord) -> Option<Input> {
    match record {
        LogRecord::Command(c) => Some(Input::Command {
            issuer: c.issuer.clone(),
            agent: c.agent.clone(),
            action: c.action,
            object: c.object.clone(),
        }),
        LogRecord::Rating(r) if r.source == ActionSource::Command => Some(Input::Rating {
            rater: r.rater.clone(),
            ratee: r.ratee.clone(),
            expectation: r.expectation,
        }),
        LogRecord::GateOverride(o) => Some(Input::OverrideGate {
            issuer: o.issuer.clone(),
        }),
        _ => None,
    }
}

/// Re-drives the simulation with the inputs recorded in `log` and checks
/// every produced record against the logged one. A log cut short inside
/// its last tick yields the trajectory up to the previous tick.
pub fn replay(log: &[LogRecord], scenario: Scenario, seed: Option<u64>) -> Result<Trajectory, SimError> {
    for (i, r) in log.iter().enumerate() {
        if r.seq() != i as u64 + 1 {
            return Err(SimError::Replay {
                seq: r.seq(),
                message: format!("expected seq {}", i + 1),
            });
        }
    }
    let mut sim = Simulation::new(scenario, seed)?;
    let last_tick = log.last().map(LogRecord::tick).unwrap_or(0);
    let mut cursor = 0;
    let mut truncated = false;
    for t in 1..=last_tick {
        let end = cursor + log[cursor..].iter().take_while(|r| r.tick() == t).count();
        let logged = &log[cursor..end];
        for input in logged.iter().filter_map(input_of) {
            sim.enqueue(input);
        }
        let produced = sim.step()?;
        for (i, rec) in logged.iter().enumerate() {
            match produced.get(i) {
                Some(p) if p == rec => {}
                Some(p) => {
                    return Err(SimError::Replay {
                        seq: rec.seq(),
                        message: format!(
                            "logged {} but replay produced {}",
                            serde_json::to_string(rec).unwrap_or_default(),
                            serde_json::to_string(p).unwrap_or_default()
                        ),
                    })
                }
                None => {
                    return Err(SimError::Replay {
                        seq: rec.seq(),
                        message: "record not produced by replay".into(),
                    })
                }
            }
        }
        if logged.len() < produced.len() {
            if t == last_tick {
                truncated = true;
                break;
            }
            return Err(SimError::Replay {
                seq: produced[logged.len()].seq(),
                message: format!("tick {t} is missing records"),
            });
        }
        cursor = end;
    }
    if cursor < log.len() && !truncated {
        return Err(SimError::Replay {
            seq: log[cursor].seq(),
            message: "records out of tick order".into(),
        });
    }
    let mut traj = sim.trajectory();
    if truncated {
        traj.snapshots.pop();
    }
    Ok(traj)
}
