//! Scenario files: the mission layout, roster, goals, tasks, principles,
//! value profiles, thresholds and tunable constants.
//!
//! Parsing rejects unknown keys at every level and reports the key path of
//! the first violation. [`Scenario::new`] performs the cross-reference checks
//! that serde cannot express.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AgentId, Cell};
use crate::world::{ActionKind, AgentKind, Beneficiary, Control, HeightClass, TagInfo, TeammateImpact};

pub const PRINCIPLE_NO_HUMAN_INTO_HAZARD: &str = "no-human-into-hazard";
pub const PRINCIPLE_NO_SCAN_BELOW_RESERVE: &str = "no-scan-below-reserve";
pub const BUILTIN_PRINCIPLES: [&str; 2] = [PRINCIPLE_NO_HUMAN_INTO_HAZARD, PRINCIPLE_NO_SCAN_BELOW_RESERVE];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("scenario {path}: {message}")]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
}

impl ScenarioError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub grid: GridSpec,
    pub tags: Vec<TagSpec>,
    pub agents: Vec<AgentSpec>,
    pub goals: Vec<GoalSpec>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub principles: Vec<String>,
    #[serde(default)]
    pub values: Vec<ValueSpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default = "default_rating_interval")]
    pub rating_interval: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_rating_interval() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub hazard_zones: Vec<Zone>,
    #[serde(default)]
    pub recharge_exits: Vec<Cell>,
}

/// Axis-aligned rectangle of cells starting at `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Zone {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= self.x
            && cell.x < self.x + self.width
            && cell.y >= self.y
            && cell.y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSpec {
    pub id: String,
    pub cell: Cell,
    pub height: HeightClass,
    pub info: TagInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default)]
    pub controlled_by: Control,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub beneficiary: Beneficiary,
    pub tasks: Vec<GoalTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalTask {
    pub task: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub action: ActionKind,
    /// Restricts the task to one object: a tag id for scans, an agent id for
    /// assists or an `x,y` cell for moves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub teammate_impact: TeammateImpact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSpec {
    pub agent: AgentId,
    pub lambda_selfish: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub id: String,
    pub required_edges: Vec<(AgentId, AgentId)>,
    #[serde(default)]
    pub capability: f64,
    #[serde(default)]
    pub predictability: f64,
    #[serde(default)]
    pub integrity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub gates: Vec<GateSpec>,
    /// Posterior mass needed to rate a teammate as selfish or team oriented.
    pub rating: f64,
    /// Energy cost above which a team-benefiting action counts as exertion.
    pub exertion_cost: f64,
    /// Robots may exit to recharge once energy drops below this level.
    pub recharge_energy: f64,
    /// Scanning below this energy violates the reserve principle.
    pub reserve_floor: f64,
    /// Members for system-wide trust; all agents when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_members: Option<Vec<AgentId>>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            gates: Vec::new(),
            rating: 0.6,
            exertion_cost: 2.5,
            recharge_energy: 6.0,
            reserve_floor: 4.0,
            system_members: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustTriple {
    pub capability: f64,
    pub predictability: f64,
    pub integrity: f64,
}

impl Default for TrustTriple {
    fn default() -> Self {
        Self {
            capability: 0.5,
            predictability: 0.5,
            integrity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustPrior {
    pub trustor: AgentId,
    pub trustee: AgentId,
    pub capability: f64,
    pub predictability: f64,
    pub integrity: f64,
}

impl TrustPrior {
    pub fn values(&self) -> TrustTriple {
        TrustTriple {
            capability: self.capability,
            predictability: self.predictability,
            integrity: self.integrity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rewards {
    pub idle: f64,
    pub recharge: f64,
    pub human_scan: f64,
    pub team_scan: f64,
    pub team_assist: f64,
    pub team_move: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Self {
            idle: 0.5,
            recharge: 1.0,
            human_scan: 1.0,
            team_scan: 3.0,
            team_assist: 5.0,
            team_move: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSpec {
    pub rungs: u8,
    pub hysteresis: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self {
            rungs: 5,
            hysteresis: 0.05,
        }
    }
}

/// Parameters of each observer's model of a teammate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BbnConstants {
    /// Prior probability of the `team-need` context state.
    pub context_prior: f64,
    /// P(team-benefiting task performed | team-need), and given no need.
    pub helping_given_need: f64,
    pub helping_given_no_need: f64,
    /// P(other task performed | team-need), and given no need.
    pub other_given_need: f64,
    pub other_given_no_need: f64,
    pub reputation_prior: f64,
    pub capability_base: f64,
    pub capability_goal_span: f64,
    pub capability_reputation_bonus: f64,
}

impl Default for BbnConstants {
    fn default() -> Self {
        Self {
            context_prior: 0.5,
            helping_given_need: 0.7,
            helping_given_no_need: 0.3,
            other_given_need: 0.3,
            other_given_no_need: 0.7,
            reputation_prior: 0.5,
            capability_base: 0.1,
            capability_goal_span: 0.6,
            capability_reputation_bonus: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Min,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    pub alpha: f64,
    pub beta: f64,
    pub energy_capacity: f64,
    pub recharge_duration: u64,
    pub unsafe_area_penalty: f64,
    pub reliability: f64,
    pub assist_radius: u32,
    pub observation_weight: f64,
    pub rating_weight: f64,
    pub exploration: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation_radius: Option<u32>,
    pub share_reputation: bool,
    pub aggregation: Aggregation,
    pub rewards: Rewards,
    pub initial_trust: TrustTriple,
    pub trust_priors: Vec<TrustPrior>,
    pub ladder: LadderSpec,
    pub bbn: BbnConstants,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.1,
            energy_capacity: 20.0,
            recharge_duration: 5,
            unsafe_area_penalty: 5.0,
            reliability: 0.9,
            assist_radius: 2,
            observation_weight: 0.2,
            rating_weight: 0.1,
            exploration: 0.0,
            observation_radius: None,
            share_reputation: false,
            aggregation: Aggregation::Min,
            rewards: Rewards::default(),
            initial_trust: TrustTriple::default(),
            trust_priors: Vec::new(),
            ladder: LadderSpec::default(),
            bbn: BbnConstants::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::at(path, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::at(".", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

/// A validated scenario with lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    spec: ScenarioSpec,
    lambdas: BTreeMap<AgentId, f64>,
}

fn unit(path: String, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ScenarioError::at(path, format!("{v} must lie in [0, 1]")))
    }
}

fn non_negative(path: String, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::at(path, format!("{v} must be a non-negative number")))
    }
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        let grid = &spec.grid;
        if grid.width == 0 || grid.height == 0 {
            return Err(ScenarioError::at("grid", "width and height must be positive"));
        }
        let in_bounds = |c: Cell| c.x < grid.width && c.y < grid.height;
        for (i, z) in grid.hazard_zones.iter().enumerate() {
            if z.width == 0 || z.height == 0 || z.x + z.width > grid.width || z.y + z.height > grid.height {
                return Err(ScenarioError::at(format!("grid.hazard_zones[{i}]"), "zone out of bounds"));
            }
        }
        for (i, c) in grid.recharge_exits.iter().enumerate() {
            if !in_bounds(*c) {
                return Err(ScenarioError::at(format!("grid.recharge_exits[{i}]"), "cell out of bounds"));
            }
        }

        let mut tag_ids = BTreeSet::new();
        for (i, t) in spec.tags.iter().enumerate() {
            if !tag_ids.insert(t.id.as_str()) {
                return Err(ScenarioError::at(format!("tags[{i}].id"), format!("duplicate tag `{}`", t.id)));
            }
            if !in_bounds(t.cell) {
                return Err(ScenarioError::at(format!("tags[{i}].cell"), "cell out of bounds"));
            }
        }

        let mut agent_ids = BTreeSet::new();
        let mut field_agents = 0;
        for (i, a) in spec.agents.iter().enumerate() {
            let path = |f: &str| format!("agents[{i}].{f}");
            if a.id.as_str().is_empty() || a.id.as_str().contains('/') {
                return Err(ScenarioError::at(path("id"), "agent ids must be non-empty and contain no `/`"));
            }
            if !agent_ids.insert(a.id.clone()) {
                return Err(ScenarioError::at(path("id"), format!("duplicate agent `{}`", a.id)));
            }
            match (a.kind, a.position) {
                (AgentKind::HumanCoordinator, Some(_)) => {
                    return Err(ScenarioError::at(path("position"), "the coordinator has no position"))
                }
                (AgentKind::HumanCoordinator, None) => {}
                (_, None) => return Err(ScenarioError::at(path("position"), "field agents need a position")),
                (_, Some(c)) if !in_bounds(c) => {
                    return Err(ScenarioError::at(path("position"), "cell out of bounds"))
                }
                _ => field_agents += 1,
            }
            match (a.kind, a.energy) {
                (AgentKind::RobotField, Some(e)) => non_negative(path("energy"), e)?,
                (AgentKind::RobotField, None) => {}
                (_, Some(_)) => return Err(ScenarioError::at(path("energy"), "only robots carry energy")),
                _ => {}
            }
            if let Some(r) = a.reliability {
                unit(path("reliability"), r)?;
            }
        }
        if spec.agents.len() < 2 {
            return Err(ScenarioError::at("agents", "at least two agents are required"));
        }
        if field_agents == 0 {
            return Err(ScenarioError::at("agents", "at least one field agent is required"));
        }
        let has_robot = spec.agents.iter().any(|a| a.kind == AgentKind::RobotField);
        if has_robot && grid.recharge_exits.is_empty() {
            return Err(ScenarioError::at("grid.recharge_exits", "robots need at least one recharge exit"));
        }

        let mut task_ids = BTreeSet::new();
        for (i, t) in spec.tasks.iter().enumerate() {
            let path = |f: &str| format!("tasks[{i}].{f}");
            if !task_ids.insert(t.id.as_str()) {
                return Err(ScenarioError::at(path("id"), format!("duplicate task `{}`", t.id)));
            }
            non_negative(path("cost"), t.cost)?;
            if let Some(target) = &t.target {
                let ok = match t.action {
                    ActionKind::Scan => tag_ids.contains(target.as_str()),
                    ActionKind::Assist => agent_ids.contains(&AgentId::new(target.clone())),
                    ActionKind::MoveTo => target.parse::<Cell>().map(in_bounds).unwrap_or(false),
                    ActionKind::Recharge | ActionKind::Idle => false,
                };
                if !ok {
                    return Err(ScenarioError::at(path("target"), format!("invalid target `{target}`")));
                }
            }
        }
        if spec.tasks.is_empty() {
            return Err(ScenarioError::at("tasks", "at least one task is required"));
        }

        let mut goal_ids = BTreeSet::new();
        for (i, g) in spec.goals.iter().enumerate() {
            if !goal_ids.insert(g.id.as_str()) {
                return Err(ScenarioError::at(format!("goals[{i}].id"), format!("duplicate goal `{}`", g.id)));
            }
            if g.tasks.is_empty() {
                return Err(ScenarioError::at(format!("goals[{i}].tasks"), "a goal needs at least one task"));
            }
            let mut seen = BTreeSet::new();
            let mut total = 0.0;
            for (j, gt) in g.tasks.iter().enumerate() {
                let path = format!("goals[{i}].tasks[{j}]");
                if !task_ids.contains(gt.task.as_str()) {
                    return Err(ScenarioError::at(path, format!("unknown task `{}`", gt.task)));
                }
                if !seen.insert(gt.task.as_str()) {
                    return Err(ScenarioError::at(path, format!("task `{}` listed twice", gt.task)));
                }
                if !(gt.weight.is_finite() && gt.weight > 0.0) {
                    return Err(ScenarioError::at(format!("{path}.weight"), "weights must be positive"));
                }
                total += gt.weight;
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(ScenarioError::at(format!("goals[{i}].tasks"), format!("weights sum to {total}, not 1")));
            }
        }
        if spec.goals.is_empty() {
            return Err(ScenarioError::at("goals", "at least one goal is required"));
        }

        for (i, p) in spec.principles.iter().enumerate() {
            if !BUILTIN_PRINCIPLES.contains(&p.as_str()) {
                return Err(ScenarioError::at(format!("principles[{i}]"), format!("unknown principle `{p}`")));
            }
        }

        let mut lambdas = BTreeMap::new();
        for (i, v) in spec.values.iter().enumerate() {
            if !agent_ids.contains(&v.agent) {
                return Err(ScenarioError::at(format!("values[{i}].agent"), format!("unknown agent `{}`", v.agent)));
            }
            unit(format!("values[{i}].lambda_selfish"), v.lambda_selfish)?;
            lambdas.insert(v.agent.clone(), v.lambda_selfish);
        }

        let th = &spec.thresholds;
        let known_edge = |path: String, (a, b): &(AgentId, AgentId)| -> Result<(), ScenarioError> {
            if !agent_ids.contains(a) || !agent_ids.contains(b) || a == b {
                return Err(ScenarioError::at(path, format!("invalid edge {a} -> {b}")));
            }
            Ok(())
        };
        let mut gate_ids = BTreeSet::new();
        for (i, g) in th.gates.iter().enumerate() {
            if !gate_ids.insert(g.id.as_str()) {
                return Err(ScenarioError::at(format!("thresholds.gates[{i}].id"), "duplicate gate"));
            }
            for (j, e) in g.required_edges.iter().enumerate() {
                known_edge(format!("thresholds.gates[{i}].required_edges[{j}]"), e)?;
            }
            unit(format!("thresholds.gates[{i}].capability"), g.capability)?;
            unit(format!("thresholds.gates[{i}].predictability"), g.predictability)?;
            unit(format!("thresholds.gates[{i}].integrity"), g.integrity)?;
        }
        unit("thresholds.rating".into(), th.rating)?;
        non_negative("thresholds.exertion_cost".into(), th.exertion_cost)?;
        non_negative("thresholds.recharge_energy".into(), th.recharge_energy)?;
        non_negative("thresholds.reserve_floor".into(), th.reserve_floor)?;
        if let Some(members) = &th.system_members {
            if members.len() < 2 {
                return Err(ScenarioError::at("thresholds.system_members", "need at least two members"));
            }
            for (i, m) in members.iter().enumerate() {
                if !agent_ids.contains(m) {
                    return Err(ScenarioError::at(format!("thresholds.system_members[{i}]"), format!("unknown agent `{m}`")));
                }
            }
        }

        if spec.rating_interval == 0 {
            return Err(ScenarioError::at("rating_interval", "must be at least 1"));
        }

        let c = &spec.constants;
        unit("constants.alpha".into(), c.alpha)?;
        unit("constants.beta".into(), c.beta)?;
        unit("constants.reliability".into(), c.reliability)?;
        unit("constants.observation_weight".into(), c.observation_weight)?;
        unit("constants.rating_weight".into(), c.rating_weight)?;
        unit("constants.exploration".into(), c.exploration)?;
        non_negative("constants.energy_capacity".into(), c.energy_capacity)?;
        non_negative("constants.unsafe_area_penalty".into(), c.unsafe_area_penalty)?;
        for (name, v) in [
            ("idle", c.rewards.idle),
            ("recharge", c.rewards.recharge),
            ("human_scan", c.rewards.human_scan),
            ("team_scan", c.rewards.team_scan),
            ("team_assist", c.rewards.team_assist),
            ("team_move", c.rewards.team_move),
        ] {
            if !v.is_finite() {
                return Err(ScenarioError::at(format!("constants.rewards.{name}"), "must be finite"));
            }
        }
        let t = c.initial_trust;
        unit("constants.initial_trust.capability".into(), t.capability)?;
        unit("constants.initial_trust.predictability".into(), t.predictability)?;
        unit("constants.initial_trust.integrity".into(), t.integrity)?;
        for (i, p) in c.trust_priors.iter().enumerate() {
            known_edge(format!("constants.trust_priors[{i}]"), &(p.trustor.clone(), p.trustee.clone()))?;
            unit(format!("constants.trust_priors[{i}].capability"), p.capability)?;
            unit(format!("constants.trust_priors[{i}].predictability"), p.predictability)?;
            unit(format!("constants.trust_priors[{i}].integrity"), p.integrity)?;
        }
        if c.ladder.rungs < 2 {
            return Err(ScenarioError::at("constants.ladder.rungs", "need at least two rungs"));
        }
        non_negative("constants.ladder.hysteresis".into(), c.ladder.hysteresis)?;
        let b = &c.bbn;
        for (name, v) in [
            ("context_prior", b.context_prior),
            ("helping_given_need", b.helping_given_need),
            ("helping_given_no_need", b.helping_given_no_need),
            ("other_given_need", b.other_given_need),
            ("other_given_no_need", b.other_given_no_need),
            ("reputation_prior", b.reputation_prior),
            ("capability_base", b.capability_base),
            ("capability_goal_span", b.capability_goal_span),
            ("capability_reputation_bonus", b.capability_reputation_bonus),
        ] {
            unit(format!("constants.bbn.{name}"), v)?;
        }
        if b.capability_base + b.capability_goal_span + b.capability_reputation_bonus > 1.0 + 1e-12 {
            return Err(ScenarioError::at("constants.bbn", "capability terms must sum to at most 1"));
        }

        Ok(Self { spec, lambdas })
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        Self::new(ScenarioSpec::from_json_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        Self::new(ScenarioSpec::from_path(path)?)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn constants(&self) -> &Constants {
        &self.spec.constants
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.spec.thresholds
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.spec.agents
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentSpec> {
        self.spec.agents.iter().find(|a| &a.id == id)
    }

    pub fn roster(&self) -> Vec<AgentId> {
        self.spec.agents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn goals(&self) -> &[GoalSpec] {
        &self.spec.goals
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.spec.tasks
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.spec.tasks.iter().find(|t| t.id == id)
    }

    pub fn lambda(&self, agent: &AgentId) -> f64 {
        self.lambdas.get(agent).copied().unwrap_or(0.5)
    }

    pub fn reliability(&self, agent: &AgentId) -> f64 {
        self.agent(agent)
            .and_then(|a| a.reliability)
            .unwrap_or(self.spec.constants.reliability)
    }

    pub fn system_members(&self) -> Vec<AgentId> {
        self.spec
            .thresholds
            .system_members
            .clone()
            .unwrap_or_else(|| self.roster())
    }

    pub fn principles(&self) -> &[String] {
        &self.spec.principles
    }

    /// Returns a copy with one agent's selfishness weight replaced.
    pub fn with_lambda(&self, agent: &AgentId, lambda: f64) -> Result<Self, ScenarioError> {
        let mut spec = self.spec.clone();
        spec.values.retain(|v| &v.agent != agent);
        spec.values.push(ValueSpec {
            agent: agent.clone(),
            lambda_selfish: lambda,
        });
        Self::new(spec)
    }
}
