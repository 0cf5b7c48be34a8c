//! Each observer's belief model of a teammate: context drives tasks, tasks
//! drive goals, and goals plus reputation drive the capability estimate.

use std::collections::BTreeMap;

use crate::bbn::{BbnError, BeliefNetwork, Evidence, NodeSpec, WeightedEvent};
use crate::ids::AgentId;
use crate::log::Expectation;
use crate::scenario::Scenario;
use crate::world::{matching_tasks, Action, TeammateImpact};

pub const NEED: &str = "team-need";
pub const NO_NEED: &str = "no-team-need";
pub const PERFORMED: &str = "performed";
pub const NOT_PERFORMED: &str = "not-performed";
pub const ACHIEVED: &str = "achieved";
pub const NOT_ACHIEVED: &str = "not-achieved";
pub const HIGH: &str = "high";
pub const LOW: &str = "low";
pub const CAPABLE: &str = "capable";
pub const INCAPABLE: &str = "incapable";

pub fn context_node(teammate: &AgentId) -> String {
    format!("{teammate}/context")
}

pub fn task_node(teammate: &AgentId, task: &str) -> String {
    format!("{teammate}/task/{task}")
}

pub fn goal_node(teammate: &AgentId, goal: &str) -> String {
    format!("{teammate}/goal/{goal}")
}

pub fn reputation_node(teammate: &AgentId) -> String {
    format!("{teammate}/reputation")
}

pub fn capability_node(teammate: &AgentId) -> String {
    format!("{teammate}/capability")
}

/// Decodes a row index of a CPT over binary parents, first parent most
/// significant. `true` means the parent sits in its first state.
fn first_states(row: usize, parents: usize) -> Vec<bool> {
    (0..parents)
        .map(|k| (row >> (parents - 1 - k)) & 1 == 0)
        .collect()
}

fn binary(p: f64) -> Vec<f64> {
    let p = p.clamp(0.0, 1.0);
    vec![p, 1.0 - p]
}

/// Node specs for one teammate.
pub fn teammate_nodes(scenario: &Scenario, teammate: &AgentId) -> Vec<NodeSpec> {
    let b = scenario.constants().bbn;
    let ctx = context_node(teammate);
    let mut nodes = vec![NodeSpec::root(&ctx, &[NEED, NO_NEED], binary(b.context_prior))];
    for t in scenario.tasks() {
        let (need, no_need) = if t.teammate_impact == TeammateImpact::Helps {
            (b.helping_given_need, b.helping_given_no_need)
        } else {
            (b.other_given_need, b.other_given_no_need)
        };
        nodes.push(NodeSpec::child(
            task_node(teammate, &t.id),
            &[PERFORMED, NOT_PERFORMED],
            &[&ctx],
            vec![binary(need), binary(no_need)],
        ));
    }
    for g in scenario.goals() {
        let parents: Vec<String> = g.tasks.iter().map(|gt| task_node(teammate, &gt.task)).collect();
        let parent_refs: Vec<&str> = parents.iter().map(String::as_str).collect();
        let cpt = (0..1usize << parents.len())
            .map(|row| {
                let done = first_states(row, parents.len());
                let p: f64 = g
                    .tasks
                    .iter()
                    .zip(done)
                    .filter(|(_, d)| *d)
                    .map(|(gt, _)| gt.weight)
                    .sum();
                binary(p)
            })
            .collect();
        nodes.push(NodeSpec::child(
            goal_node(teammate, &g.id),
            &[ACHIEVED, NOT_ACHIEVED],
            &parent_refs,
            cpt,
        ));
    }
    let rep = reputation_node(teammate);
    nodes.push(NodeSpec::root(&rep, &[HIGH, LOW], binary(b.reputation_prior)));
    let mut parents: Vec<String> = scenario.goals().iter().map(|g| goal_node(teammate, &g.id)).collect();
    parents.push(rep);
    let parent_refs: Vec<&str> = parents.iter().map(String::as_str).collect();
    let n_goals = scenario.goals().len();
    let cpt = (0..1usize << parents.len())
        .map(|row| {
            let s = first_states(row, parents.len());
            let achieved = s[..n_goals].iter().filter(|x| **x).count() as f64;
            let high = if s[n_goals] { 1.0 } else { 0.0 };
            binary(
                b.capability_base
                    + b.capability_goal_span * achieved / n_goals as f64
                    + b.capability_reputation_bonus * high,
            )
        })
        .collect();
    nodes.push(NodeSpec::child(
        capability_node(teammate),
        &[CAPABLE, INCAPABLE],
        &parent_refs,
        cpt,
    ));
    nodes
}

/// The network an observer keeps about every other in-world agent.
pub fn observer_network(scenario: &Scenario, observer: &AgentId) -> Result<BeliefNetwork, BbnError> {
    let mut nodes = Vec::new();
    for a in scenario.agents() {
        if &a.id != observer && a.kind.in_world() {
            nodes.extend(teammate_nodes(scenario, &a.id));
        }
    }
    BeliefNetwork::build(nodes)
}

/// Distribution over goal ids: each goal's posterior probability of being
/// achieved, normalized across goals. Uniform if every goal has zero mass.
pub fn infer_goal(
    net: &BeliefNetwork,
    scenario: &Scenario,
    teammate: &AgentId,
    observed_task: Option<&str>,
    team_need: Option<bool>,
) -> Result<BTreeMap<String, f64>, BbnError> {
    let mut ev = Evidence::new();
    if let Some(t) = observed_task {
        let node = task_node(teammate, t);
        if !net.contains(&node) {
            return Err(BbnError::UnknownNode(node));
        }
        ev.insert(node, PERFORMED)?;
    }
    if let Some(need) = team_need {
        ev.insert(context_node(teammate), if need { NEED } else { NO_NEED })?;
    }
    let mut mass = BTreeMap::new();
    for g in scenario.goals() {
        let post = net.query_posterior(&goal_node(teammate, &g.id), &ev)?;
        mass.insert(g.id.clone(), post[0]);
    }
    let total: f64 = mass.values().sum();
    let n = mass.len() as f64;
    for v in mass.values_mut() {
        *v = if total > 0.0 { *v / total } else { 1.0 / n };
    }
    Ok(mass)
}

/// Events for observing `action`: matching task nodes are nudged towards
/// `performed`, every other task node towards `not-performed`.
pub fn observation_events(
    scenario: &Scenario,
    teammate: &AgentId,
    action: &Action,
    weight: f64,
    tag: &str,
) -> Vec<WeightedEvent> {
    let hit: Vec<&str> = matching_tasks(scenario, action).iter().map(|t| t.id.as_str()).collect();
    scenario
        .tasks()
        .iter()
        .map(|t| {
            let state = if hit.contains(&t.id.as_str()) { PERFORMED } else { NOT_PERFORMED };
            WeightedEvent::new(task_node(teammate, &t.id), state, weight).with_context(tag)
        })
        .collect()
}

/// A rating nudges the rater's reputation node for the ratee.
pub fn rating_event(ratee: &AgentId, expectation: Expectation, weight: f64, tag: &str) -> Option<WeightedEvent> {
    let state = match expectation {
        Expectation::TeamGoal => HIGH,
        Expectation::SelfishGoal => LOW,
        Expectation::Unsure => return None,
    };
    Some(WeightedEvent::new(reputation_node(ratee), state, weight).with_context(tag))
}

/// Capability prediction for a teammate conditioned on its reputation.
pub fn predicted_capability(net: &BeliefNetwork, teammate: &AgentId) -> Result<f64, BbnError> {
    let p = net.predict_from_history(&capability_node(teammate), &reputation_node(teammate), &Evidence::new())?;
    Ok(p[0])
}
