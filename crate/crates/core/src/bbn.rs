//! Discrete Bayesian belief networks with exact inference by enumeration.
//!
//! A [`BeliefNetwork`] holds, for every node, a current marginal belief. Root
//! nodes take their belief as their prior. When an event-driven
//! [`protocol_update`](BeliefNetwork::protocol_update) touches a non-root
//! node, that node becomes *pinned*: its belief replaces its CPT as the
//! distribution it contributes to the joint, and every unpinned descendant is
//! recomputed from the resulting joint. Queries always enumerate the joint of
//! this effective network, so unpinned beliefs and prior posteriors agree.
//!
//! CPT rows are stored row-major in parent-state lexicographic order: the
//! first listed parent is the most significant digit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BbnError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("node `{node}` lists parent `{parent}` more than once")]
    DuplicateParent { node: String, parent: String },
    #[error("node `{0}` needs at least two states")]
    TooFewStates(String),
    #[error("node `{node}` has duplicate state `{state}`")]
    DuplicateState { node: String, state: String },
    #[error("cycle detected through node `{0}`")]
    Cycle(String),
    #[error("node `{node}`: malformed CPT ({reason})")]
    MalformedCpt { node: String, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },
    #[error("event weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("evidence assigns both `{first}` and `{second}` to node `{node}`")]
    ConflictingEvidence {
        node: String,
        first: String,
        second: String,
    },
    #[error("evidence has zero joint probability")]
    ImpossibleEvidence,
    #[error("belief for node `{node}` is malformed ({reason})")]
    MalformedBelief { node: String, reason: String },
    #[error("`{reputation}` is not an ancestor of `{capability}`")]
    NotAncestor {
        reputation: String,
        capability: String,
    },
}

/// One node of the network: an ordered state list, its parents and a CPT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<Vec<f64>>,
}

impl NodeSpec {
    pub fn root(id: impl Into<String>, states: &[&str], prior: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: Vec::new(),
            cpt: vec![prior],
        }
    }

    pub fn child(
        id: impl Into<String>,
        states: &[&str],
        parents: &[&str],
        cpt: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            id: id.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }
}

/// A belief increment for one observed state: `weight` is the value of the
/// context weight function for this event, `context_tag` names the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEvent {
    pub node: String,
    pub state: String,
    pub weight: f64,
    #[serde(default)]
    pub context_tag: String,
}

impl WeightedEvent {
    pub fn new(node: impl Into<String>, state: impl Into<String>, weight: f64) -> Self {
        Self {
            node: node.into(),
            state: state.into(),
            weight,
            context_tag: String::new(),
        }
    }

    pub fn with_context(mut self, tag: impl Into<String>) -> Self {
        self.context_tag = tag.into();
        self
    }
}

/// Observed node states used to condition a query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    entries: BTreeMap<String, String>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `node = state`. Assigning a second, different state to a node is
    /// an error; repeating the same assignment is not.
    pub fn insert(
        &mut self,
        node: impl Into<String>,
        state: impl Into<String>,
    ) -> Result<(), BbnError> {
        let node = node.into();
        let state = state.into();
        match self.entries.get(&node) {
            Some(prev) if *prev != state => Err(BbnError::ConflictingEvidence {
                node,
                first: prev.clone(),
                second: state,
            }),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(node, state);
                Ok(())
            }
        }
    }

    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, BbnError> {
        let mut ev = Self::new();
        for (n, s) in pairs {
            ev.insert(n, s)?;
        }
        Ok(ev)
    }

    pub fn get(&self, node: &str) -> Option<&str> {
        self.entries.get(node).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(n, s)| (n.as_str(), s.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Layout {
    index: BTreeMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    /// Topological order of node indices.
    order: Vec<usize>,
}

/// A DAG of discrete nodes with current marginal beliefs.
#[derive(Debug, Clone)]
pub struct BeliefNetwork {
    nodes: Vec<NodeSpec>,
    layout: Layout,
    beliefs: Vec<Vec<f64>>,
    pinned: Vec<bool>,
}

impl PartialEq for BeliefNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.beliefs == other.beliefs && self.pinned == other.pinned
    }
}

fn check_distribution(values: &[f64]) -> Result<(), String> {
    if values.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err("probability outside [0, 1]".into());
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

fn layout(specs: &[NodeSpec]) -> Result<Layout, BbnError> {
    let mut index = BTreeMap::new();
    for (i, spec) in specs.iter().enumerate() {
        if index.insert(spec.id.clone(), i).is_some() {
            return Err(BbnError::DuplicateNode(spec.id.clone()));
        }
    }
    let mut parents = Vec::with_capacity(specs.len());
    let mut children = vec![Vec::new(); specs.len()];
    for (i, spec) in specs.iter().enumerate() {
        let mut seen = BTreeSet::new();
        let mut ps = Vec::with_capacity(spec.parents.len());
        for p in &spec.parents {
            let &pi = index.get(p).ok_or_else(|| BbnError::UnknownParent {
                node: spec.id.clone(),
                parent: p.clone(),
            })?;
            if !seen.insert(pi) {
                return Err(BbnError::DuplicateParent {
                    node: spec.id.clone(),
                    parent: p.clone(),
                });
            }
            ps.push(pi);
            children[pi].push(i);
        }
        parents.push(ps);
    }

    // Kahn's algorithm; ties resolved by declaration order.
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..specs.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(specs.len());
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != specs.len() {
        let stuck = (0..specs.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(BbnError::Cycle(specs[stuck].id.clone()));
    }
    Ok(Layout {
        index,
        parents,
        children,
        order,
    })
}

fn validate_spec(spec: &NodeSpec, specs: &[NodeSpec], layout: &Layout) -> Result<(), BbnError> {
    if spec.states.len() < 2 {
        return Err(BbnError::TooFewStates(spec.id.clone()));
    }
    let mut seen = BTreeSet::new();
    for s in &spec.states {
        if !seen.insert(s) {
            return Err(BbnError::DuplicateState {
                node: spec.id.clone(),
                state: s.clone(),
            });
        }
    }
    let rows: usize = spec
        .parents
        .iter()
        .map(|p| specs[layout.index[p]].states.len())
        .product();
    let malformed = |reason: String| BbnError::MalformedCpt {
        node: spec.id.clone(),
        reason,
    };
    if spec.cpt.len() != rows {
        return Err(malformed(format!(
            "expected {rows} rows, found {}",
            spec.cpt.len()
        )));
    }
    for (r, row) in spec.cpt.iter().enumerate() {
        if row.len() != spec.states.len() {
            return Err(malformed(format!(
                "row {r} has {} entries, expected {}",
                row.len(),
                spec.states.len()
            )));
        }
        check_distribution(row).map_err(|e| malformed(format!("row {r} {e}")))?;
    }
    Ok(())
}

impl BeliefNetwork {
    /// Validates the node specs and initializes every belief to its exact
    /// marginal under the root priors.
    pub fn build(specs: Vec<NodeSpec>) -> Result<Self, BbnError> {
        let layout = layout(&specs)?;
        for spec in &specs {
            validate_spec(spec, &specs, &layout)?;
        }
        let beliefs = specs
            .iter()
            .map(|s| {
                if s.parents.is_empty() {
                    s.cpt[0].clone()
                } else {
                    vec![0.0; s.states.len()]
                }
            })
            .collect();
        let mut net = Self {
            pinned: vec![false; specs.len()],
            nodes: specs,
            layout,
            beliefs,
        };
        let all: Vec<usize> = (0..net.nodes.len()).collect();
        net.refresh(&all);
        Ok(net)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.layout.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.layout.index.contains_key(id)
    }

    pub fn belief(&self, id: &str) -> Option<&[f64]> {
        self.layout.index.get(id).map(|&i| self.beliefs[i].as_slice())
    }

    /// Probability currently assigned to `state` of `node`.
    pub fn belief_of(&self, node: &str, state: &str) -> Result<f64, BbnError> {
        let (n, s) = self.resolve(node, state)?;
        Ok(self.beliefs[n][s])
    }

    pub fn beliefs(&self) -> BTreeMap<&str, &[f64]> {
        self.nodes
            .iter()
            .zip(&self.beliefs)
            .map(|(n, b)| (n.id.as_str(), b.as_slice()))
            .collect()
    }

    pub fn is_pinned(&self, id: &str) -> bool {
        self.layout
            .index
            .get(id)
            .map(|&i| self.pinned[i])
            .unwrap_or(false)
    }

    /// True if `ancestor` reaches `node` along parent edges.
    pub fn is_ancestor(&self, ancestor: &str, node: &str) -> bool {
        let (Some(&a), Some(&n)) = (self.layout.index.get(ancestor), self.layout.index.get(node))
        else {
            return false;
        };
        let mut stack = vec![n];
        let mut seen = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            for &p in &self.layout.parents[cur] {
                if p == a {
                    return true;
                }
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        false
    }

    fn resolve(&self, node: &str, state: &str) -> Result<(usize, usize), BbnError> {
        let &n = self
            .layout
            .index
            .get(node)
            .ok_or_else(|| BbnError::UnknownNode(node.to_string()))?;
        let s = self.nodes[n]
            .states
            .iter()
            .position(|x| x == state)
            .ok_or_else(|| BbnError::UnknownState {
                node: node.to_string(),
                state: state.to_string(),
            })?;
        Ok((n, s))
    }

    fn is_source(&self, n: usize) -> bool {
        self.pinned[n] || self.layout.parents[n].is_empty()
    }

    /// Factor contributed by node `n` in state `s` under `assignment`.
    fn factor(&self, n: usize, s: usize, assignment: &[usize]) -> f64 {
        if self.is_source(n) {
            return self.beliefs[n][s];
        }
        let mut row = 0usize;
        for &p in &self.layout.parents[n] {
            row = row * self.nodes[p].states.len() + assignment[p];
        }
        self.nodes[n].cpt[row][s]
    }

    /// Ancestral closure of `seeds` in the effective graph (sources have no
    /// incoming edges), ordered topologically.
    fn closure(&self, seeds: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut member = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        while let Some(n) = stack.pop() {
            if member[n] {
                continue;
            }
            member[n] = true;
            if !self.is_source(n) {
                stack.extend(self.layout.parents[n].iter().copied());
            }
        }
        self.layout
            .order
            .iter()
            .copied()
            .filter(|&n| member[n])
            .collect()
    }

    /// Visits every joint assignment of `scope` consistent with `fixed`,
    /// passing the assignment and its (unnormalized) joint probability.
    fn enumerate(
        &self,
        scope: &[usize],
        fixed: &BTreeMap<usize, usize>,
        mut visit: impl FnMut(&[usize], f64),
    ) {
        let mut assignment = vec![0usize; self.nodes.len()];
        let free: Vec<usize> = scope
            .iter()
            .copied()
            .filter(|n| !fixed.contains_key(n))
            .collect();
        for (&n, &s) in fixed {
            assignment[n] = s;
        }
        loop {
            let mut p = 1.0;
            for &n in scope {
                p *= self.factor(n, assignment[n], &assignment);
                if p == 0.0 {
                    break;
                }
            }
            visit(&assignment, p);

            // Mixed-radix increment over the free nodes.
            let mut carry = true;
            for &n in free.iter().rev() {
                assignment[n] += 1;
                if assignment[n] < self.nodes[n].states.len() {
                    carry = false;
                    break;
                }
                assignment[n] = 0;
            }
            if carry {
                break;
            }
        }
    }

    /// Recomputes the marginals of every unpinned, non-root node that is
    /// `dirty` or descends from a dirty node.
    fn refresh(&mut self, dirty: &[usize]) {
        let mut targets = BTreeSet::new();
        let mut stack: Vec<usize> = dirty.to_vec();
        while let Some(n) = stack.pop() {
            if !self.is_source(n) {
                targets.insert(n);
            }
            for &c in &self.layout.children[n] {
                if !targets.contains(&c) {
                    stack.push(c);
                }
            }
        }
        if targets.is_empty() {
            return;
        }
        let scope = self.closure(targets.iter().copied());
        for part in self.components(&scope) {
            let mut acc: BTreeMap<usize, Vec<f64>> = part
                .iter()
                .filter(|n| targets.contains(n))
                .map(|&n| (n, vec![0.0; self.nodes[n].states.len()]))
                .collect();
            let mut total = 0.0;
            self.enumerate(&part, &BTreeMap::new(), |a, p| {
                total += p;
                for (n, v) in acc.iter_mut() {
                    v[a[*n]] += p;
                }
            });
            for (n, mut v) in acc {
                if total > 0.0 {
                    v.iter_mut().for_each(|x| *x /= total);
                }
                self.beliefs[n] = v;
            }
        }
    }

    /// Splits a closed scope into groups connected through effective
    /// parent links; each group keeps topological order.
    fn components(&self, scope: &[usize]) -> Vec<Vec<usize>> {
        let mut group: BTreeMap<usize, usize> = scope.iter().map(|&n| (n, n)).collect();
        fn find(group: &mut BTreeMap<usize, usize>, n: usize) -> usize {
            let mut root = n;
            while group[&root] != root {
                root = group[&root];
            }
            let mut cur = n;
            while group[&cur] != root {
                let next = group[&cur];
                group.insert(cur, root);
                cur = next;
            }
            root
        }
        for &n in scope {
            if self.is_source(n) {
                continue;
            }
            for &p in &self.layout.parents[n] {
                let (a, b) = (find(&mut group, n), find(&mut group, p));
                if a != b {
                    group.insert(a.max(b), a.min(b));
                }
            }
        }
        let mut parts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &n in scope {
            let r = find(&mut group, n);
            parts.entry(r).or_default().push(n);
        }
        parts.into_values().collect()
    }

    fn check_event(&self, event: &WeightedEvent) -> Result<(usize, usize), BbnError> {
        let idx = self.resolve(&event.node, &event.state)?;
        if !(0.0..=1.0).contains(&event.weight) {
            return Err(BbnError::WeightOutOfRange(event.weight));
        }
        Ok(idx)
    }

    /// Raises the occurred state's belief by the event weight (capped at 1)
    /// and rescales the other states proportionally so the node still sums
    /// to one. Unpinned descendants are recomputed afterwards.
    pub fn protocol_update(&mut self, event: &WeightedEvent) -> Result<(), BbnError> {
        self.apply_events(std::slice::from_ref(event))
    }

    /// Applies several events, then recomputes descendants once. All events
    /// are validated before any belief changes.
    pub fn apply_events(&mut self, events: &[WeightedEvent]) -> Result<(), BbnError> {
        let resolved = events
            .iter()
            .map(|e| self.check_event(e).map(|idx| (idx, e.weight)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut dirty = Vec::new();
        for ((n, s), weight) in resolved {
            if weight == 0.0 {
                continue;
            }
            bump(&mut self.beliefs[n], s, weight);
            if !self.layout.parents[n].is_empty() {
                self.pinned[n] = true;
            }
            dirty.push(n);
        }
        self.refresh(&dirty);
        Ok(())
    }

    fn fixed_states(&self, evidence: &Evidence) -> Result<BTreeMap<usize, usize>, BbnError> {
        evidence.iter().map(|(n, s)| self.resolve(n, s)).collect()
    }

    /// Exact posterior marginal of `query` given `evidence`.
    pub fn query_posterior(&self, query: &str, evidence: &Evidence) -> Result<Vec<f64>, BbnError> {
        let &q = self
            .layout
            .index
            .get(query)
            .ok_or_else(|| BbnError::UnknownNode(query.to_string()))?;
        let fixed = self.fixed_states(evidence)?;
        let scope = self.closure(std::iter::once(q).chain(fixed.keys().copied()));
        let mut dist = vec![0.0; self.nodes[q].states.len()];
        let mut total = 0.0;
        // Independent components only matter through the evidence they hold.
        for part in self.components(&scope) {
            if part.contains(&q) {
                self.enumerate(&part, &fixed, |a, p| {
                    total += p;
                    dist[a[q]] += p;
                });
            } else {
                let mut mass = 0.0;
                self.enumerate(&part, &fixed, |_, p| mass += p);
                if mass <= 0.0 {
                    return Err(BbnError::ImpossibleEvidence);
                }
            }
        }
        if total <= 0.0 {
            return Err(BbnError::ImpossibleEvidence);
        }
        dist.iter_mut().for_each(|x| *x /= total);
        Ok(dist)
    }

    /// Predicts `capability` by conditioning on the dominant current state of
    /// `reputation` (plus any extra evidence).
    pub fn predict_from_history(
        &self,
        capability: &str,
        reputation: &str,
        evidence: &Evidence,
    ) -> Result<Vec<f64>, BbnError> {
        let rep = self
            .node(reputation)
            .ok_or_else(|| BbnError::UnknownNode(reputation.to_string()))?;
        if !self.contains(capability) {
            return Err(BbnError::UnknownNode(capability.to_string()));
        }
        if !self.is_ancestor(reputation, capability) {
            return Err(BbnError::NotAncestor {
                reputation: reputation.to_string(),
                capability: capability.to_string(),
            });
        }
        let belief = self.belief(reputation).unwrap_or_default();
        let dominant = argmax(belief);
        let mut ev = evidence.clone();
        ev.insert(reputation, rep.states[dominant].clone())?;
        self.query_posterior(capability, &ev)
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            nodes: self.nodes.clone(),
            beliefs: self
                .nodes
                .iter()
                .zip(&self.beliefs)
                .map(|(n, b)| (n.id.clone(), b.clone()))
                .collect(),
            pinned: self
                .nodes
                .iter()
                .zip(&self.pinned)
                .filter(|(_, p)| **p)
                .map(|(n, _)| n.id.clone())
                .collect(),
        }
    }

    pub fn from_document(doc: NetworkDocument) -> Result<Self, BbnError> {
        let mut net = Self::build(doc.nodes)?;
        for id in &doc.pinned {
            let &i = net
                .layout
                .index
                .get(id)
                .ok_or_else(|| BbnError::UnknownNode(id.clone()))?;
            net.pinned[i] = !net.layout.parents[i].is_empty();
        }
        for (id, belief) in doc.beliefs {
            let &i = net
                .layout
                .index
                .get(&id)
                .ok_or_else(|| BbnError::UnknownNode(id.clone()))?;
            if belief.len() != net.nodes[i].states.len() {
                return Err(BbnError::MalformedBelief {
                    node: id,
                    reason: "wrong length".into(),
                });
            }
            check_distribution(&belief)
                .map_err(|reason| BbnError::MalformedBelief { node: id, reason })?;
            net.beliefs[i] = belief;
        }
        Ok(net)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn bump(belief: &mut [f64], occurred: usize, weight: f64) {
    let previous = belief[occurred];
    let raised = (previous + weight).min(1.0);
    let others: f64 = belief
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != occurred)
        .map(|(_, p)| *p)
        .sum();
    let scale = if others > 0.0 {
        ((1.0 - raised) / others).min(1.0)
    } else {
        0.0
    };
    for (i, p) in belief.iter_mut().enumerate() {
        if i == occurred {
            *p = raised;
        } else {
            *p *= scale;
        }
    }
    if others <= 0.0 {
        // Occurred state already held all the mass.
        belief[occurred] = 1.0;
    }
}

/// Serialized network: node specs, current beliefs and the pinned node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: Vec<NodeSpec>,
    pub beliefs: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned: Vec<String>,
}

impl Serialize for BeliefNetwork {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BeliefNetwork {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = NetworkDocument::deserialize(deserializer)?;
        Self::from_document(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_root(id: &str, p: f64) -> NodeSpec {
        NodeSpec::root(id, &["t", "f"], vec![p, 1.0 - p])
    }

    #[test]
    fn single_node_identity() {
        let net = BeliefNetwork::build(vec![binary_root("a", 0.5)]).unwrap();
        assert_eq!(net.belief("a").unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn deterministic_cpt_copies_parent() {
        let net = BeliefNetwork::build(vec![
            binary_root("a", 0.3),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        ])
        .unwrap();
        assert_eq!(net.belief("b").unwrap(), &[0.3, 0.7]);
    }

    #[test]
    fn rejects_bad_graphs() {
        let cyc = vec![
            NodeSpec::child("a", &["t", "f"], &["b"], vec![vec![0.5, 0.5]; 2]),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![0.5, 0.5]; 2]),
        ];
        assert!(matches!(BeliefNetwork::build(cyc), Err(BbnError::Cycle(_))));

        let dangling = vec![NodeSpec::child("a", &["t", "f"], &["zz"], vec![vec![0.5, 0.5]; 2])];
        assert!(matches!(
            BeliefNetwork::build(dangling),
            Err(BbnError::UnknownParent { .. })
        ));

        let short = vec![binary_root("a", 0.5), NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![0.5, 0.5]])];
        assert!(matches!(
            BeliefNetwork::build(short),
            Err(BbnError::MalformedCpt { .. })
        ));

        let bad_sum = vec![NodeSpec::root("a", &["t", "f"], vec![0.5, 0.6])];
        assert!(matches!(
            BeliefNetwork::build(bad_sum),
            Err(BbnError::MalformedCpt { .. })
        ));

        let dup = vec![binary_root("a", 0.5), binary_root("a", 0.5)];
        assert!(matches!(BeliefNetwork::build(dup), Err(BbnError::DuplicateNode(_))));
    }

    #[test]
    fn nine_to_one_goal_update() {
        let mut net = BeliefNetwork::build(vec![NodeSpec::root(
            "goal",
            &["achieved", "not-achieved"],
            vec![0.0, 1.0],
        )])
        .unwrap();
        net.protocol_update(&WeightedEvent::new("goal", "achieved", 0.9))
            .unwrap();
        assert_eq!(net.belief("goal").unwrap(), &[0.9, 0.09999999999999998]);
        assert_eq!(net.belief_of("goal", "achieved").unwrap(), 0.9);
    }

    #[test]
    fn update_forced_by_normalization() {
        let mut net = BeliefNetwork::build(vec![binary_root("a", 0.4)]).unwrap();
        // The first state takes the increment, the second absorbs the rest.
        net.protocol_update(&WeightedEvent::new("a", "t", 0.3)).unwrap();
        let b = net.belief("a").unwrap();
        assert!((b[0] - 0.7).abs() < 1e-12);
        assert!((b[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_identity() {
        let mut net = BeliefNetwork::build(vec![binary_root("a", 0.37)]).unwrap();
        let before = net.clone();
        net.protocol_update(&WeightedEvent::new("a", "t", 0.0)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn update_errors() {
        let mut net = BeliefNetwork::build(vec![binary_root("a", 0.5)]).unwrap();
        assert!(matches!(
            net.protocol_update(&WeightedEvent::new("x", "t", 0.1)),
            Err(BbnError::UnknownNode(_))
        ));
        assert!(matches!(
            net.protocol_update(&WeightedEvent::new("a", "x", 0.1)),
            Err(BbnError::UnknownState { .. })
        ));
        assert!(matches!(
            net.protocol_update(&WeightedEvent::new("a", "t", 1.5)),
            Err(BbnError::WeightOutOfRange(_))
        ));
    }

    #[test]
    fn non_root_update_pins_and_propagates() {
        let mut net = BeliefNetwork::build(vec![
            binary_root("a", 0.5),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            NodeSpec::child("c", &["t", "f"], &["b"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        ])
        .unwrap();
        net.protocol_update(&WeightedEvent::new("b", "t", 0.2)).unwrap();
        assert!(net.is_pinned("b"));
        let b = net.belief("b").unwrap().to_vec();
        assert!((b[0] - 0.75).abs() < 1e-12);
        let c = net.belief("c").unwrap();
        assert!((c[0] - b[0]).abs() < 1e-12);
        // Pinned node ignores its parent's evidence.
        let ev = Evidence::from_pairs([("a", "f")]).unwrap();
        let post = net.query_posterior("c", &ev).unwrap();
        assert!((post[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn self_evidence_and_conflicts() {
        let net = BeliefNetwork::build(vec![
            binary_root("a", 0.3),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
        ])
        .unwrap();
        let ev = Evidence::from_pairs([("b", "f")]).unwrap();
        assert_eq!(net.query_posterior("b", &ev).unwrap(), vec![0.0, 1.0]);
        assert_eq!(
            net.query_posterior("a", &Evidence::new()).unwrap(),
            vec![0.3, 0.7]
        );
        assert!(matches!(
            Evidence::from_pairs([("a", "t"), ("a", "f")]),
            Err(BbnError::ConflictingEvidence { .. })
        ));
    }

    #[test]
    fn impossible_evidence() {
        let net = BeliefNetwork::build(vec![
            NodeSpec::root("a", &["t", "f"], vec![1.0, 0.0]),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        ])
        .unwrap();
        let ev = Evidence::from_pairs([("b", "f")]).unwrap();
        assert_eq!(
            net.query_posterior("a", &ev),
            Err(BbnError::ImpossibleEvidence)
        );
    }

    #[test]
    fn reputation_predicts_capability() {
        let mut net = BeliefNetwork::build(vec![
            NodeSpec::root("rep", &["high", "low"], vec![0.4, 0.6]),
            NodeSpec::child(
                "cap",
                &["capable", "incapable"],
                &["rep"],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ),
        ])
        .unwrap();
        let p = net.predict_from_history("cap", "rep", &Evidence::new()).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        net.protocol_update(&WeightedEvent::new("rep", "high", 0.5)).unwrap();
        let p = net.predict_from_history("cap", "rep", &Evidence::new()).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert!(matches!(
            net.predict_from_history("rep", "cap", &Evidence::new()),
            Err(BbnError::NotAncestor { .. })
        ));
    }

    #[test]
    fn uniform_cpts_leave_prior() {
        let net = BeliefNetwork::build(vec![
            NodeSpec::root("rep", &["high", "low"], vec![0.5, 0.5]),
            NodeSpec::child("cap", &["capable", "incapable"], &["rep"], vec![vec![0.5, 0.5]; 2]),
        ])
        .unwrap();
        let p = net.predict_from_history("cap", "rep", &Evidence::new()).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn document_round_trip_is_exact() {
        let mut net = BeliefNetwork::build(vec![
            binary_root("a", 0.1 + 0.2),
            NodeSpec::child("b", &["t", "f"], &["a"], vec![vec![0.7, 0.3], vec![1.0 / 3.0, 2.0 / 3.0]]),
        ])
        .unwrap();
        net.protocol_update(&WeightedEvent::new("b", "t", 0.123456789)).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: BeliefNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        assert!(json.starts_with("{\"nodes\":"));
    }
}
