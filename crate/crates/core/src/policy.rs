//! Myopic scripted policies on the selfish/team spectrum, teammate
//! prediction and periodic ratings.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::bbn::{BbnError, BeliefNetwork};
use crate::ids::AgentId;
use crate::log::Expectation;
use crate::scenario::{Scenario, PRINCIPLE_NO_SCAN_BELOW_RESERVE};
use crate::teammate::infer_goal;
use crate::world::{
    action_cost, available_actions, check_principles, matching_tasks, Action, AgentKind, Beneficiary,
    WorldError, WorldState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Bbn(#[from] BbnError),
    #[error("tick {tick} is not a rating tick (interval {interval})")]
    OffInterval { tick: u64, interval: u64 },
    #[error("`{0}` has no available actions")]
    NoActions(AgentId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub own: f64,
    pub team: f64,
}

impl Scores {
    pub fn blend(self, lambda: f64) -> f64 {
        lambda * self.own + (1.0 - lambda) * self.team
    }
}

fn scannable_tags<'a>(world: &'a WorldState, kind: AgentKind) -> impl Iterator<Item = &'a crate::world::ARTag> {
    world
        .tags
        .iter()
        .filter(move |t| t.scanned_by.is_empty() && t.readable_by(kind))
}

/// Whether the agent could scan right now without breaking a principle.
fn can_scan(world: &WorldState, scenario: &Scenario, agent: &AgentId) -> bool {
    let Some(me) = world.agent(agent) else { return false };
    let Some(energy) = me.energy else { return true };
    let cost = action_cost(scenario, &Action::Scan(String::new()));
    let floor = if scenario.principles().iter().any(|p| p == PRINCIPLE_NO_SCAN_BELOW_RESERVE) {
        scenario.thresholds().reserve_floor
    } else {
        0.0
    };
    energy >= cost.max(floor)
}

/// Self and team reward of one action for the acting agent.
pub fn score_action(world: &WorldState, scenario: &Scenario, agent: &AgentId, action: &Action) -> Scores {
    let r = scenario.constants().rewards;
    let Some(me) = world.agent(agent) else {
        return Scores { own: 0.0, team: 0.0 };
    };
    let robot = me.kind == AgentKind::RobotField;
    let mut own = if robot { -action_cost(scenario, action) } else { 0.0 };
    let mut team = 0.0;
    let from = me.position;
    let landing = match action {
        Action::MoveTo(c) => Some(*c),
        _ => from,
    };
    match action {
        Action::Idle => own += r.idle,
        Action::Recharge => {
            own += r.recharge;
            team += r.recharge;
        }
        Action::Scan(_) => {
            team += r.team_scan;
            if !robot {
                own += r.human_scan;
            }
        }
        Action::Assist(_) => team += r.team_assist,
        Action::MoveTo(to) => {
            if let Some(from) = from {
                if can_scan(world, scenario, agent) {
                    let nearest = scannable_tags(world, me.kind).map(|t| t.cell.manhattan(from)).min();
                    let after = scannable_tags(world, me.kind).map(|t| t.cell.manhattan(*to)).min();
                    if let (Some(n), Some(a)) = (nearest, after) {
                        if a < n {
                            team += r.team_move;
                        }
                    }
                }
            }
        }
    }
    if me.kind == AgentKind::HumanField && landing.is_some_and(|c| world.is_hazard(c)) {
        own -= scenario.constants().unsafe_area_penalty;
    }
    Scores { own, team }
}

/// Available actions that break no principle, in tie-break order.
pub fn permitted_actions(world: &WorldState, scenario: &Scenario, agent: &AgentId) -> Result<Vec<Action>, PolicyError> {
    let mut out = Vec::new();
    for a in available_actions(world, scenario, agent)? {
        if check_principles(world, scenario, agent, &a, false, scenario.principles())?.is_empty() {
            out.push(a);
        }
    }
    Ok(out)
}

/// Picks the best-scoring permitted action; the earliest in tie-break order
/// wins ties. With exploration `eps`, a single uniform draw `u < eps`
/// instead selects action `floor(u / eps * n)`.
pub fn choose_action(
    world: &WorldState,
    scenario: &Scenario,
    agent: &AgentId,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<Action, PolicyError> {
    let actions = permitted_actions(world, scenario, agent)?;
    if actions.is_empty() {
        return Err(PolicyError::NoActions(agent.clone()));
    }
    let eps = scenario.constants().exploration;
    let u: f64 = rng.random();
    if u < eps {
        let i = ((u / eps) * actions.len() as f64) as usize;
        return Ok(actions[i.min(actions.len() - 1)].clone());
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, a) in actions.iter().enumerate() {
        let s = score_action(world, scenario, agent, a).blend(lambda);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(actions[best].clone())
}

/// How much an action serves each goal, weighted by the goal distribution.
fn goal_value(scenario: &Scenario, goals: &BTreeMap<String, f64>, action: &Action) -> f64 {
    let tasks = matching_tasks(scenario, action);
    scenario
        .goals()
        .iter()
        .map(|g| {
            let w: f64 = g
                .tasks
                .iter()
                .filter(|gt| tasks.iter().any(|t| t.id == gt.task))
                .map(|gt| gt.weight)
                .sum();
            goals.get(&g.id).copied().unwrap_or(0.0) * w
        })
        .sum()
}

/// The observer's expectation of a teammate's next action: the available
/// action that best serves the inferred goal mix.
pub fn predict_action(
    world: &WorldState,
    scenario: &Scenario,
    net: &BeliefNetwork,
    teammate: &AgentId,
    last_task: Option<&str>,
) -> Result<Action, PolicyError> {
    let goals = infer_goal(net, scenario, teammate, last_task, None)?;
    let actions = available_actions(world, scenario, teammate)?;
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, a) in actions.iter().enumerate() {
        let v = goal_value(scenario, &goals, a);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    Ok(actions[best].clone())
}

/// Classifies a goal distribution by the beneficiary mass.
pub fn expectation(scenario: &Scenario, goals: &BTreeMap<String, f64>) -> Expectation {
    let threshold = scenario.thresholds().rating;
    let mass = |b: Beneficiary| -> f64 {
        scenario
            .goals()
            .iter()
            .filter(|g| g.beneficiary == b)
            .map(|g| goals.get(&g.id).copied().unwrap_or(0.0))
            .sum()
    };
    if mass(Beneficiary::Individual) > threshold {
        Expectation::SelfishGoal
    } else if mass(Beneficiary::Team) > threshold {
        Expectation::TeamGoal
    } else {
        Expectation::Unsure
    }
}

/// One expectation per modelled teammate, in roster order. `last_tasks`
/// holds the task last attributed to each teammate.
pub fn rate_teammates(
    scenario: &Scenario,
    observer: &AgentId,
    net: &BeliefNetwork,
    tick: u64,
    last_tasks: &BTreeMap<AgentId, String>,
) -> Result<Vec<(AgentId, Expectation)>, PolicyError> {
    let interval = scenario.spec().rating_interval;
    if tick == 0 || tick % interval != 0 {
        return Err(PolicyError::OffInterval { tick, interval });
    }
    let mut out = Vec::new();
    for a in scenario.agents() {
        if &a.id == observer || !a.kind.in_world() {
            continue;
        }
        let goals = infer_goal(net, scenario, &a.id, last_tasks.get(&a.id).map(String::as_str), None)?;
        out.push((a.id.clone(), expectation(scenario, &goals)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Cell;
    use crate::teammate::observer_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario() -> Scenario {
        Scenario::from_json_str(
            r#"{
            "grid": {"width": 6, "height": 6,
                     "hazard_zones": [{"x": 4, "y": 4, "width": 2, "height": 2}],
                     "recharge_exits": [{"x": 0, "y": 0}]},
            "tags": [
                {"id": "r1", "cell": {"x": 2, "y": 2}, "height": "robot-level", "info": "hazard-area"},
                {"id": "r2", "cell": {"x": 0, "y": 5}, "height": "robot-level", "info": "object-risky"}
            ],
            "agents": [
                {"id": "robot-1", "kind": "robot-field", "position": {"x": 2, "y": 2}},
                {"id": "human-1", "kind": "human-field", "position": {"x": 1, "y": 1}}
            ],
            "goals": [
                {"id": "mark", "beneficiary": "team",
                 "tasks": [{"task": "scan-tag", "weight": 0.9}, {"task": "explore", "weight": 0.1}]},
                {"id": "save", "beneficiary": "self",
                 "tasks": [{"task": "hold", "weight": 0.6}, {"task": "recharge", "weight": 0.4}]}
            ],
            "tasks": [
                {"id": "scan-tag", "action": "scan", "cost": 2, "teammate_impact": "helps"},
                {"id": "assist", "action": "assist", "cost": 3, "teammate_impact": "helps"},
                {"id": "explore", "action": "move-to"},
                {"id": "hold", "action": "idle"},
                {"id": "recharge", "action": "recharge"}
            ],
            "principles": ["no-human-into-hazard", "no-scan-below-reserve"]
        }"#,
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn team_robot_assists() {
        let s = scenario();
        let mut w = WorldState::from_scenario(&s);
        w.agents[1].position = Some(Cell::new(4, 4));
        w.agents[0].position = Some(Cell::new(3, 3));
        let a = choose_action(&w, &s, &"robot-1".into(), 0.0, &mut rng()).unwrap();
        assert_eq!(a, Action::Assist("human-1".into()));
    }

    #[test]
    fn selfish_robot_idles_instead_of_scanning() {
        let s = scenario();
        let w = WorldState::from_scenario(&s);
        let a = choose_action(&w, &s, &"robot-1".into(), 1.0, &mut rng()).unwrap();
        assert_eq!(a, Action::Idle);
        let a = choose_action(&w, &s, &"robot-1".into(), 0.0, &mut rng()).unwrap();
        assert_eq!(a, Action::Scan("r1".into()));
    }

    #[test]
    fn balanced_choice_matches_brute_force() {
        let s = scenario();
        let w = WorldState::from_scenario(&s);
        let agent: AgentId = "robot-1".into();
        let chosen = choose_action(&w, &s, &agent, 0.5, &mut rng()).unwrap();
        // Independent oracle: enumerate, score by hand, keep the max under
        // the kind ranking.
        let mut options = available_actions(&w, &s, &agent).unwrap();
        options.retain(|a| check_principles(&w, &s, &agent, a, false, s.principles()).unwrap().is_empty());
        let value = |a: &Action| {
            let sc = score_action(&w, &s, &agent, a);
            0.5 * sc.own + 0.5 * sc.team
        };
        let top = options.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
        let oracle = options
            .iter()
            .filter(|a| value(a) == top)
            .min_by_key(|a| (a.kind().priority(), a.object()))
            .unwrap();
        assert_eq!(&chosen, oracle);
    }

    #[test]
    fn low_energy_team_robot_recharges() {
        let s = scenario();
        let mut w = WorldState::from_scenario(&s);
        w.agents[0].energy = Some(3.0);
        let a = choose_action(&w, &s, &"robot-1".into(), 0.0, &mut rng()).unwrap();
        assert_eq!(a, Action::Recharge);
    }

    #[test]
    fn human_avoids_hazard() {
        let s = scenario();
        let mut w = WorldState::from_scenario(&s);
        w.agents[1].position = Some(Cell::new(3, 4));
        let a = choose_action(&w, &s, &"human-1".into(), 0.5, &mut rng()).unwrap();
        assert_ne!(a, Action::MoveTo(Cell::new(4, 4)));
    }

    #[test]
    fn ratings_follow_thresholds() {
        let s = scenario();
        let mut goals = BTreeMap::new();
        goals.insert("mark".to_string(), 0.1);
        goals.insert("save".to_string(), 0.9);
        assert_eq!(expectation(&s, &goals), Expectation::SelfishGoal);
        goals.insert("mark".to_string(), 0.5);
        goals.insert("save".to_string(), 0.5);
        assert_eq!(expectation(&s, &goals), Expectation::Unsure);

        let net = observer_network(&s, &"human-1".into()).unwrap();
        assert!(rate_teammates(&s, &"human-1".into(), &net, 7, &BTreeMap::new()).is_err());
        let mut last = BTreeMap::new();
        last.insert(AgentId::from("robot-1"), "hold".to_string());
        let r = rate_teammates(&s, &"human-1".into(), &net, 10, &last).unwrap();
        assert_eq!(r, vec![(AgentId::from("robot-1"), Expectation::SelfishGoal)]);
    }

    #[test]
    fn prediction_prefers_goal_serving_action() {
        let s = scenario();
        let w = WorldState::from_scenario(&s);
        let net = observer_network(&s, &"human-1".into()).unwrap();
        let p = predict_action(&w, &s, &net, &"robot-1".into(), Some("scan-tag")).unwrap();
        assert_eq!(p, Action::Scan("r1".into()));
        let p = predict_action(&w, &s, &net, &"robot-1".into(), Some("hold")).unwrap();
        assert_eq!(p, Action::Idle);
    }
}
