//! Grid-world search mission: cells, AR tags, agents, affordances and the
//! action transition function.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AgentId, Cell};
use crate::log::{ActionSource, EventRecord};
use crate::scenario::{
    GoalSpec, Scenario, TaskSpec, PRINCIPLE_NO_HUMAN_INTO_HAZARD, PRINCIPLE_NO_SCAN_BELOW_RESERVE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),
    #[error("action {action} is not available to `{agent}`")]
    Unavailable { agent: AgentId, action: Action },
    #[error("unknown principle `{0}`")]
    UnknownPrinciple(String),
    #[error("task `{task}` is not part of goal `{goal}`")]
    TaskNotInGoal { task: String, goal: String },
    #[error("cannot build action: {0}")]
    BadAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    RobotField,
    HumanField,
    HumanCoordinator,
}

impl AgentKind {
    pub fn in_world(self) -> bool {
        self != AgentKind::HumanCoordinator
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    #[default]
    Policy,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeightClass {
    HumanLevel,
    RobotLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagInfo {
    SafeArea,
    HazardArea,
    ObjectOperational,
    ObjectRisky,
    ObjectNeedsRepair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Safe,
    Hazard,
    RechargeExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Beneficiary {
    #[serde(rename = "self")]
    Individual,
    #[serde(rename = "team")]
    Team,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeammateImpact {
    #[default]
    None,
    Helps,
    Harms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Scan,
    MoveTo,
    Assist,
    Recharge,
    Idle,
}

impl ActionKind {
    /// Tie-break rank: lower wins.
    pub fn priority(self) -> u8 {
        match self {
            ActionKind::Assist => 0,
            ActionKind::Scan => 1,
            ActionKind::MoveTo => 2,
            ActionKind::Recharge => 3,
            ActionKind::Idle => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Scan => "scan",
            ActionKind::MoveTo => "move-to",
            ActionKind::Assist => "assist",
            ActionKind::Recharge => "recharge",
            ActionKind::Idle => "idle",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete action. Ordered by kind priority, then target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "target")]
pub enum Action {
    Assist(AgentId),
    Scan(String),
    MoveTo(Cell),
    Recharge,
    Idle,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Assist(_) => ActionKind::Assist,
            Action::Scan(_) => ActionKind::Scan,
            Action::MoveTo(_) => ActionKind::MoveTo,
            Action::Recharge => ActionKind::Recharge,
            Action::Idle => ActionKind::Idle,
        }
    }

    /// Target id as written in event records.
    pub fn object(&self) -> Option<String> {
        match self {
            Action::Assist(a) => Some(a.0.clone()),
            Action::Scan(t) => Some(t.clone()),
            Action::MoveTo(c) => Some(c.to_string()),
            Action::Recharge | Action::Idle => None,
        }
    }

    pub fn from_parts(kind: ActionKind, object: Option<&str>) -> Result<Self, WorldError> {
        let need = |o: Option<&str>| {
            o.map(str::to_string)
                .ok_or_else(|| WorldError::BadAction(format!("{kind} needs a target")))
        };
        let action = match kind {
            ActionKind::Assist => Action::Assist(AgentId(need(object)?)),
            ActionKind::Scan => Action::Scan(need(object)?),
            ActionKind::MoveTo => Action::MoveTo(need(object)?.parse().map_err(WorldError::BadAction)?),
            ActionKind::Recharge | ActionKind::Idle => {
                if object.is_some() {
                    return Err(WorldError::BadAction(format!("{kind} takes no target")));
                }
                if kind == ActionKind::Idle {
                    Action::Idle
                } else {
                    Action::Recharge
                }
            }
        };
        Ok(action)
    }
}

impl Ord for Action {
    fn cmp(&self, other: &Self) -> Ordering {
        let rank = self.kind().priority().cmp(&other.kind().priority());
        rank.then_with(|| match (self, other) {
            (Action::Assist(a), Action::Assist(b)) => a.cmp(b),
            (Action::Scan(a), Action::Scan(b)) => a.cmp(b),
            (Action::MoveTo(a), Action::MoveTo(b)) => a.cmp(b),
            _ => Ordering::Equal,
        })
    }
}

impl PartialOrd for Action {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.object() {
            Some(o) => write!(f, "{}({o})", self.kind()),
            None => write!(f, "{}", self.kind()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    Failure,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARTag {
    pub id: String,
    pub cell: Cell,
    pub height_class: HeightClass,
    pub info: TagInfo,
    pub scanned_by: BTreeSet<AgentId>,
}

impl ARTag {
    pub fn readable_by(&self, kind: AgentKind) -> bool {
        matches!(
            (self.height_class, kind),
            (HeightClass::RobotLevel, AgentKind::RobotField)
                | (HeightClass::HumanLevel, AgentKind::HumanField)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Option<Cell>,
    pub energy: Option<f64>,
    pub controlled_by: Control,
    /// Tick at which an ongoing recharge completes.
    pub recharging_until: Option<u64>,
    /// Personal score: scan rewards and unsafe-area penalties.
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub width: u32,
    pub height: u32,
    cells: Vec<CellKind>,
    pub tags: Vec<ARTag>,
    pub agents: Vec<AgentState>,
    pub tick: u64,
}

/// Where, when, and what the acting agent could have done.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub tick: u64,
    pub location: Option<Cell>,
    pub opportunity: Vec<Action>,
}

/// Caller-supplied bookkeeping for the produced event record.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMeta {
    pub seq: u64,
    pub source: ActionSource,
    pub issuer: AgentId,
}

impl WorldState {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let spec = scenario.spec();
        let grid = &spec.grid;
        let mut cells = vec![CellKind::Safe; (grid.width * grid.height) as usize];
        for z in &grid.hazard_zones {
            for y in z.y..z.y + z.height {
                for x in z.x..z.x + z.width {
                    cells[(y * grid.width + x) as usize] = CellKind::Hazard;
                }
            }
        }
        for c in &grid.recharge_exits {
            cells[(c.y * grid.width + c.x) as usize] = CellKind::RechargeExit;
        }
        let tags = spec
            .tags
            .iter()
            .map(|t| ARTag {
                id: t.id.clone(),
                cell: t.cell,
                height_class: t.height,
                info: t.info,
                scanned_by: BTreeSet::new(),
            })
            .collect();
        let capacity = spec.constants.energy_capacity;
        let agents = spec
            .agents
            .iter()
            .map(|a| AgentState {
                id: a.id.clone(),
                kind: a.kind,
                position: a.position,
                energy: (a.kind == AgentKind::RobotField).then(|| a.energy.unwrap_or(capacity)),
                controlled_by: a.controlled_by,
                recharging_until: None,
                points: 0.0,
            })
            .collect();
        Self {
            width: grid.width,
            height: grid.height,
            cells,
            tags,
            agents,
            tick: 0,
        }
    }

    pub fn cell_kind(&self, cell: Cell) -> Option<CellKind> {
        self.in_bounds(cell)
            .then(|| self.cells[(cell.y * self.width + cell.x) as usize])
    }

    pub fn is_hazard(&self, cell: Cell) -> bool {
        self.cell_kind(cell) == Some(CellKind::Hazard)
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentState> {
        self.agents.iter().find(|a| &a.id == id)
    }

    fn agent_mut(&mut self, id: &AgentId) -> Option<&mut AgentState> {
        self.agents.iter_mut().find(|a| &a.id == id)
    }

    pub fn tag(&self, id: &str) -> Option<&ARTag> {
        self.tags.iter().find(|t| t.id == id)
    }

    fn neighbours(&self, cell: Cell) -> Vec<Cell> {
        let mut out = Vec::with_capacity(4);
        if cell.x > 0 {
            out.push(Cell::new(cell.x - 1, cell.y));
        }
        if cell.x + 1 < self.width {
            out.push(Cell::new(cell.x + 1, cell.y));
        }
        if cell.y > 0 {
            out.push(Cell::new(cell.x, cell.y - 1));
        }
        if cell.y + 1 < self.height {
            out.push(Cell::new(cell.x, cell.y + 1));
        }
        out
    }

    /// Closest cell satisfying `pred`; ties go to the lowest cell.
    fn nearest(&self, from: Cell, pred: impl Fn(Cell) -> bool) -> Option<Cell> {
        let mut best: Option<(u32, Cell)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                if !pred(c) {
                    continue;
                }
                let key = (from.manhattan(c), c);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Starts a new tick and completes recharges that are due.
    pub fn begin_tick(&mut self, scenario: &Scenario) {
        self.tick += 1;
        let capacity = scenario.constants().energy_capacity;
        let tick = self.tick;
        for a in &mut self.agents {
            if a.recharging_until.is_some_and(|until| tick >= until) {
                a.recharging_until = None;
                a.energy = Some(capacity);
            }
        }
    }

    pub fn context(&self, scenario: &Scenario, agent: &AgentId) -> Result<Context, WorldError> {
        let state = self
            .agent(agent)
            .ok_or_else(|| WorldError::UnknownAgent(agent.clone()))?;
        Ok(Context {
            tick: self.tick,
            location: state.position,
            opportunity: available_actions(self, scenario, agent)?,
        })
    }
}

/// The scenario task an action is attributed to: a task naming the action's
/// exact target wins over an untargeted task of the same kind.
pub fn task_for<'a>(scenario: &'a Scenario, action: &Action) -> Option<&'a TaskSpec> {
    let object = action.object();
    let same_kind = || scenario.tasks().iter().filter(|t| t.action == action.kind());
    same_kind()
        .find(|t| t.target.is_some() && t.target == object)
        .or_else(|| same_kind().find(|t| t.target.is_none()))
}

/// Every task whose kind and (optional) target match the action.
pub fn matching_tasks<'a>(scenario: &'a Scenario, action: &Action) -> Vec<&'a TaskSpec> {
    let object = action.object();
    scenario
        .tasks()
        .iter()
        .filter(|t| t.action == action.kind() && (t.target.is_none() || t.target == object))
        .collect()
}

/// Energy an action costs a robot. Idling and recharging are free.
pub fn action_cost(scenario: &Scenario, action: &Action) -> f64 {
    match action {
        Action::Idle | Action::Recharge => 0.0,
        _ => task_for(scenario, action).map(|t| t.cost).unwrap_or(0.0),
    }
}

pub fn action_impact(scenario: &Scenario, action: &Action) -> TeammateImpact {
    task_for(scenario, action)
        .map(|t| t.teammate_impact)
        .unwrap_or_default()
}

/// Actions the agent may take right now, in tie-break order.
pub fn available_actions(
    world: &WorldState,
    scenario: &Scenario,
    agent: &AgentId,
) -> Result<Vec<Action>, WorldError> {
    let me = world
        .agent(agent)
        .ok_or_else(|| WorldError::UnknownAgent(agent.clone()))?;
    let Some(pos) = me.position else {
        return Ok(vec![Action::Idle]);
    };
    if me.recharging_until.is_some() {
        return Ok(vec![Action::Idle]);
    }
    let affordable = |a: &Action| me.energy.is_none_or(|e| e >= action_cost(scenario, a));
    let mut out = Vec::new();

    for n in world.neighbours(pos) {
        out.push(Action::MoveTo(n));
    }
    for tag in &world.tags {
        if tag.cell == pos && tag.scanned_by.is_empty() && tag.readable_by(me.kind) {
            out.push(Action::Scan(tag.id.clone()));
        }
    }
    let radius = scenario.constants().assist_radius;
    for other in &world.agents {
        if other.id == me.id || other.kind != AgentKind::HumanField {
            continue;
        }
        if let Some(op) = other.position {
            if world.is_hazard(op) && op.manhattan(pos) <= radius {
                out.push(Action::Assist(other.id.clone()));
            }
        }
    }
    if me.kind == AgentKind::RobotField
        && me
            .energy
            .is_some_and(|e| e < scenario.thresholds().recharge_energy)
    {
        out.push(Action::Recharge);
    }
    out.retain(affordable);
    out.push(Action::Idle);
    out.sort();
    Ok(out)
}

/// Applies one action. `outcome_draw` is a uniform sample in `[0, 1)` used
/// by the scan failure rule; the transition is otherwise deterministic.
pub fn apply_action(
    world: &WorldState,
    scenario: &Scenario,
    agent: &AgentId,
    action: &Action,
    outcome_draw: f64,
    meta: EventMeta,
) -> Result<(WorldState, EventRecord, Outcome), WorldError> {
    let available = available_actions(world, scenario, agent)?;
    let placed = world.agent(agent).is_some_and(|a| a.position.is_some());
    if !placed || !available.contains(action) {
        return Err(WorldError::Unavailable {
            agent: agent.clone(),
            action: action.clone(),
        });
    }
    let mut next = world.clone();
    let reliability = scenario.reliability(agent);
    let cost = action_cost(scenario, action);
    let me = next.agent(agent).cloned().expect("agent checked above");
    let location = me.position.expect("placed agents have a position");
    let mut outcome = Outcome::Success;

    match action {
        Action::MoveTo(cell) => {
            let a = next.agent_mut(agent).expect("agent exists");
            a.position = Some(*cell);
        }
        Action::Scan(tag_id) => {
            if outcome_draw >= reliability {
                outcome = Outcome::Failure;
            } else {
                let tag = next
                    .tags
                    .iter_mut()
                    .find(|t| &t.id == tag_id)
                    .expect("available scan names a tag");
                tag.scanned_by.insert(agent.clone());
                if me.kind == AgentKind::HumanField {
                    let reward = scenario.constants().rewards.human_scan;
                    next.agent_mut(agent).expect("agent exists").points += reward;
                }
            }
        }
        Action::Assist(target) => {
            let from = next
                .agent(target)
                .and_then(|t| t.position)
                .expect("assist target is in the world");
            let safe = next.nearest(from, |c| !world.is_hazard(c));
            if let Some(safe) = safe {
                next.agent_mut(target).expect("target exists").position = Some(safe);
            }
        }
        Action::Recharge => {
            let exit = next
                .nearest(location, |c| world.cell_kind(c) == Some(CellKind::RechargeExit))
                .unwrap_or(location);
            let until = world.tick + scenario.constants().recharge_duration;
            let a = next.agent_mut(agent).expect("agent exists");
            a.position = Some(exit);
            a.recharging_until = Some(until);
        }
        Action::Idle => {}
    }

    let a = next.agent_mut(agent).expect("agent exists");
    if let Some(e) = a.energy.as_mut() {
        *e -= cost;
    }
    if a.kind == AgentKind::HumanField && a.position.is_some_and(|p| world.is_hazard(p)) {
        a.points -= scenario.constants().unsafe_area_penalty;
    }

    let record = EventRecord {
        seq: meta.seq,
        agent_id: agent.clone(),
        time: world.tick,
        location,
        object: action.object(),
        action: action.kind(),
        outcome,
        source: meta.source,
        issuer: meta.issuer,
    };
    Ok((next, record, outcome))
}

/// Ids of the listed principles that `action` violates, in list order.
/// `commanded` marks actions issued by another agent.
pub fn check_principles(
    world: &WorldState,
    scenario: &Scenario,
    agent: &AgentId,
    action: &Action,
    commanded: bool,
    principles: &[String],
) -> Result<Vec<String>, WorldError> {
    let me = world
        .agent(agent)
        .ok_or_else(|| WorldError::UnknownAgent(agent.clone()))?;
    let mut violated = Vec::new();
    for p in principles {
        let broken = match p.as_str() {
            PRINCIPLE_NO_HUMAN_INTO_HAZARD => {
                commanded
                    && me.kind == AgentKind::HumanField
                    && matches!(action, Action::MoveTo(c) if world.is_hazard(*c))
            }
            PRINCIPLE_NO_SCAN_BELOW_RESERVE => {
                matches!(action, Action::Scan(_))
                    && me
                        .energy
                        .is_some_and(|e| e < scenario.thresholds().reserve_floor)
            }
            other => return Err(WorldError::UnknownPrinciple(other.to_string())),
        };
        if broken {
            violated.push(p.clone());
        }
    }
    Ok(violated)
}

/// Sum of the criticality weights of the goal's completed tasks.
pub fn goal_progress(goal: &GoalSpec, completed: &BTreeSet<String>) -> Result<f64, WorldError> {
    if let Some(stray) = completed
        .iter()
        .find(|t| !goal.tasks.iter().any(|gt| &gt.task == *t))
    {
        return Err(WorldError::TaskNotInGoal {
            task: stray.clone(),
            goal: goal.id.clone(),
        });
    }
    let total: f64 = goal
        .tasks
        .iter()
        .filter(|gt| completed.contains(&gt.task))
        .map(|gt| gt.weight)
        .sum();
    Ok(total.min(1.0))
}

/// Per-goal progress of one agent given every task it has completed.
pub fn progress_by_goal(
    scenario: &Scenario,
    completed: &BTreeSet<String>,
) -> BTreeMap<String, f64> {
    scenario
        .goals()
        .iter()
        .map(|g| {
            let own: BTreeSet<String> = completed
                .iter()
                .filter(|t| g.tasks.iter().any(|gt| &gt.task == *t))
                .cloned()
                .collect();
            let p = goal_progress(g, &own).expect("filtered to goal tasks");
            (g.id.clone(), p)
        })
        .collect()
}
