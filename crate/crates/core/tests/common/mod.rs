#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use trust_ladder_core::bbn::NodeSpec;
use trust_ladder_core::Scenario;

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/basic.json")
}

pub fn fixture() -> Scenario {
    Scenario::from_path(&fixture_path()).expect("fixture validates")
}

/// Brute-force posterior: sums the full joint over every node, with no
/// pruning and no reuse of the engine's code paths.
pub fn joint_posterior(nodes: &[NodeSpec], query: &str, evidence: &BTreeMap<String, usize>) -> Vec<f64> {
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let sizes: Vec<usize> = nodes.iter().map(|n| n.states.len()).collect();
    let total: usize = sizes.iter().product();
    let q = index[query];
    let mut dist = vec![0.0; sizes[q]];
    let mut states = vec![0usize; nodes.len()];
    for mut code in 0..total {
        for i in (0..nodes.len()).rev() {
            states[i] = code % sizes[i];
            code /= sizes[i];
        }
        if evidence.iter().any(|(n, s)| states[index[n.as_str()]] != *s) {
            continue;
        }
        let mut p = 1.0;
        for (i, n) in nodes.iter().enumerate() {
            let mut row = 0;
            for parent in &n.parents {
                let j = index[parent.as_str()];
                row = row * sizes[j] + states[j];
            }
            p *= n.cpt[row][states[i]];
        }
        dist[states[q]] += p;
    }
    let z: f64 = dist.iter().sum();
    dist.iter().map(|x| x / z).collect()
}

fn random_row(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|x| x / z).collect()
}

/// A random DAG of binary nodes: each node draws up to three parents from
/// the nodes before it.
pub fn random_dag(rng: &mut impl Rng, n: usize) -> Vec<NodeSpec> {
    let mut nodes: Vec<NodeSpec> = Vec::new();
    for i in 0..n {
        let mut parents = Vec::new();
        for j in 0..i {
            if parents.len() < 3 && rng.random_bool(0.35) {
                parents.push(format!("n{j}"));
            }
        }
        let rows = 1usize << parents.len();
        nodes.push(NodeSpec {
            id: format!("n{i}"),
            states: vec!["s0".into(), "s1".into()],
            parents,
            cpt: (0..rows).map(|_| random_row(rng, 2)).collect(),
        });
    }
    nodes
}
