//! Passive learning of deterministic labeled MDPs from observation traces.
//!
//! Traces are first folded into a frequency prefix tree ([`Iofpta`]). The
//! red-blue loop then promotes the root, repeatedly takes the smallest blue
//! node in breadth-first order (depth, then access path), merges it into the
//! first compatible red state in promotion order, or promotes it. Frequencies
//! are summed during folding, so the learned probabilities are exact ratios of
//! folded counts.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dlmdp, ModelError, Transition};
use crate::symbol::Symbol;
use crate::trace::ObservationSequence;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample has {found} traces, at least {required} required")]
    TooFewTraces { found: usize, required: usize },
    #[error("traces start with different observations ({0} and {1})")]
    InconsistentInitial(Symbol, Symbol),
    #[error("significance must lie in (0, 1], got {0}")]
    BadSignificance(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub eps_al: f64,
    pub min_traces: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { eps_al: 0.05, min_traces: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub action: Symbol,
    pub obs: Symbol,
    pub child: NodeId,
    pub freq: u64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub label: Symbol,
    pub edges: Vec<Edge>,
    parent: Option<NodeId>,
}

impl Node {
    fn edge(&self, action: Symbol, obs: Symbol) -> Option<&Edge> {
        self.edges.iter().find(|e| e.action == action && e.obs == obs)
    }

    fn edge_mut(&mut self, action: Symbol, obs: Symbol) -> Option<&mut Edge> {
        self.edges.iter_mut().find(|e| e.action == action && e.obs == obs)
    }

    fn action_total(&self, action: Symbol) -> u64 {
        self.edges.iter().filter(|e| e.action == action).map(|e| e.freq).sum()
    }
}

/// Input/output frequency prefix tree. Node ids follow breadth-first order
/// with children sorted by `(action, observation)`, so comparing ids compares
/// `(depth, access path)`.
#[derive(Debug, Clone)]
pub struct Iofpta {
    nodes: Vec<Node>,
}

pub fn build_iofpta<'a, T, I>(traces: I) -> Result<Iofpta, LearnError>
where
    T: ObservationSequence + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut nodes: Vec<Node> = Vec::new();
    for trace in traces {
        let init = trace.initial_obs();
        match nodes.first() {
            None => nodes.push(Node { label: init, edges: Vec::new(), parent: None }),
            Some(root) if root.label != init => return Err(LearnError::InconsistentInitial(root.label, init)),
            Some(_) => {}
        }
        let mut cur = 0;
        for (a, o) in trace.io_steps() {
            let next = match nodes[cur].edge_mut(a, o) {
                Some(e) => {
                    e.freq += 1;
                    e.child
                }
                None => {
                    let id = nodes.len();
                    nodes[cur].edges.push(Edge { action: a, obs: o, child: id, freq: 1 });
                    nodes.push(Node { label: o, edges: Vec::new(), parent: Some(cur) });
                    id
                }
            };
            cur = next;
        }
    }
    if nodes.is_empty() {
        return Err(LearnError::EmptySample);
    }
    Ok(Iofpta { nodes: renumber_breadth_first(nodes) })
}

fn renumber_breadth_first(mut nodes: Vec<Node>) -> Vec<Node> {
    let mut syms: BTreeSet<Symbol> = BTreeSet::new();
    for n in &nodes {
        syms.insert(n.label);
        for e in &n.edges {
            syms.insert(e.action);
        }
    }
    let rank: HashMap<Symbol, usize> = syms.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
    for n in &mut nodes {
        n.edges.sort_by_key(|e| (rank[&e.action], rank[&e.obs]));
    }
    let mut new_id = vec![usize::MAX; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut queue = VecDeque::from([0usize]);
    while let Some(old) = queue.pop_front() {
        new_id[old] = order.len();
        order.push(old);
        queue.extend(nodes[old].edges.iter().map(|e| e.child));
    }
    let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|old| {
            let mut n = slots[old].take().unwrap();
            n.parent = n.parent.map(|p| new_id[p]);
            for e in &mut n.edges {
                e.child = new_id[e.child];
            }
            n
        })
        .collect()
}

impl Iofpta {
    pub fn root(&self) -> NodeId {
        0
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn child(&self, id: NodeId, action: Symbol, obs: Symbol) -> Option<NodeId> {
        self.nodes[id].edge(action, obs).map(|e| e.child)
    }

    pub fn freq(&self, id: NodeId, action: Symbol, obs: Symbol) -> u64 {
        self.nodes[id].edge(action, obs).map_or(0, |e| e.freq)
    }

    /// Sum of all edge frequencies.
    pub fn total_frequency(&self) -> u64 {
        self.nodes.iter().flat_map(|n| n.edges.iter()).map(|e| e.freq).sum()
    }

    /// Label equality plus recursive Hoeffding compatibility of successor
    /// distributions for every shared action.
    pub fn compatible(&self, r: NodeId, b: NodeId, eps_al: f64) -> Result<bool, LearnError> {
        check_significance(eps_al)?;
        Ok(self.compatible_with(r, b, hoeffding_scale(eps_al)))
    }

    fn compatible_with(&self, r: NodeId, b: NodeId, scale: f64) -> bool {
        let mut stack = vec![(r, b)];
        while let Some((x, y)) = stack.pop() {
            let (nx, ny) = (&self.nodes[x], &self.nodes[y]);
            if nx.label != ny.label {
                return false;
            }
            if !distributions_compatible(nx, ny, scale) {
                return false;
            }
            for e in &ny.edges {
                if let Some(ex) = nx.edge(e.action, e.obs) {
                    stack.push((ex.child, e.child));
                }
            }
        }
        true
    }
}

fn check_significance(eps_al: f64) -> Result<(), LearnError> {
    if eps_al > 0.0 && eps_al <= 1.0 {
        Ok(())
    } else {
        Err(LearnError::BadSignificance(eps_al))
    }
}

fn hoeffding_scale(eps_al: f64) -> f64 {
    (0.5 * (2.0 / eps_al).ln()).sqrt()
}

fn within_bound(f1: u64, n1: u64, f2: u64, n2: u64, scale: f64) -> bool {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let diff = (f1 as f64 / n1f - f2 as f64 / n2f).abs();
    diff < scale * (1.0 / n1f.sqrt() + 1.0 / n2f.sqrt())
}

fn distributions_compatible(x: &Node, y: &Node, scale: f64) -> bool {
    let mut checked: Vec<Symbol> = Vec::new();
    for e in &y.edges {
        if checked.contains(&e.action) {
            continue;
        }
        checked.push(e.action);
        let (n1, n2) = (x.action_total(e.action), y.action_total(e.action));
        if n1 == 0 || n2 == 0 {
            continue;
        }
        let outcomes = x.edges.iter().chain(&y.edges).filter(|f| f.action == e.action);
        for f in outcomes {
            let f1 = x.edge(e.action, f.obs).map_or(0, |g| g.freq);
            let f2 = y.edge(e.action, f.obs).map_or(0, |g| g.freq);
            if !within_bound(f1, n1, f2, n2, scale) {
                return false;
            }
        }
    }
    true
}

/// Hoeffding test on two observation-count vectors for one action: true iff
/// either sample is empty or every observation frequency differs by less than
/// `sqrt(ln(2/eps)/2) * (1/sqrt(n1) + 1/sqrt(n2))`.
pub fn hoeffding_compatible(
    f1: &BTreeMap<Symbol, u64>,
    n1: u64,
    f2: &BTreeMap<Symbol, u64>,
    n2: u64,
    eps_al: f64,
) -> Result<bool, LearnError> {
    check_significance(eps_al)?;
    if n1 == 0 || n2 == 0 {
        return Ok(true);
    }
    let scale = hoeffding_scale(eps_al);
    let keys: BTreeSet<&Symbol> = f1.keys().chain(f2.keys()).collect();
    Ok(keys.into_iter().all(|o| {
        let c1 = f1.get(o).copied().unwrap_or(0);
        let c2 = f2.get(o).copied().unwrap_or(0);
        within_bound(c1, n1, c2, n2, scale)
    }))
}

struct RedBlue {
    tree: Iofpta,
    red: Vec<NodeId>,
    is_red: Vec<bool>,
    scale: f64,
}

impl RedBlue {
    fn smallest_blue(&self) -> Option<NodeId> {
        self.red
            .iter()
            .flat_map(|&r| self.tree.nodes[r].edges.iter())
            .map(|e| e.child)
            .filter(|&c| !self.is_red[c])
            .min()
    }

    fn merge(&mut self, r: NodeId, b: NodeId) {
        let parent = self.tree.nodes[b].parent.expect("blue node without parent");
        for e in &mut self.tree.nodes[parent].edges {
            if e.child == b {
                e.child = r;
            }
        }
        self.fold(r, b);
    }

    fn fold(&mut self, x: NodeId, y: NodeId) {
        let edges = std::mem::take(&mut self.tree.nodes[y].edges);
        for e in edges {
            match self.tree.nodes[x].edge_mut(e.action, e.obs) {
                Some(ex) => {
                    ex.freq += e.freq;
                    let target = ex.child;
                    self.fold(target, e.child);
                }
                None => {
                    self.tree.nodes[x].edges.push(e);
                    self.tree.nodes[e.child].parent = Some(x);
                }
            }
        }
    }

    fn run(mut self) -> Result<Dlmdp, LearnError> {
        while let Some(b) = self.smallest_blue() {
            let target = self.red.iter().copied().find(|&r| self.tree.compatible_with(r, b, self.scale));
            match target {
                Some(r) => self.merge(r, b),
                None => {
                    self.red.push(b);
                    self.is_red[b] = true;
                }
            }
        }
        self.into_model()
    }

    fn into_model(self) -> Result<Dlmdp, LearnError> {
        let index: HashMap<NodeId, usize> = self.red.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let actions: Vec<Symbol> = self
            .red
            .iter()
            .flat_map(|&r| self.tree.nodes[r].edges.iter().map(|e| e.action))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels = self.red.iter().map(|&r| self.tree.nodes[r].label).collect();
        let trans = self
            .red
            .iter()
            .map(|&r| {
                let node = &self.tree.nodes[r];
                actions
                    .iter()
                    .map(|&a| {
                        let total = node.action_total(a);
                        node.edges
                            .iter()
                            .filter(|e| e.action == a)
                            .map(|e| Transition {
                                target: index[&e.child],
                                prob: e.freq as f64 / total as f64,
                                count: Some(e.freq),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Dlmdp::new(0, actions, labels, trans)?)
    }
}

/// Learns a deterministic labeled MDP from a multiset of traces. Rewards, if
/// the traces carry any, are ignored.
pub fn run_ioalergia<'a, T, I>(traces: I, config: &LearnerConfig) -> Result<Dlmdp, LearnError>
where
    T: ObservationSequence + 'a,
    I: IntoIterator<Item = &'a T>,
{
    check_significance(config.eps_al)?;
    let traces: Vec<&T> = traces.into_iter().collect();
    if traces.is_empty() {
        return Err(LearnError::EmptySample);
    }
    if traces.len() < config.min_traces {
        return Err(LearnError::TooFewTraces { found: traces.len(), required: config.min_traces });
    }
    learn_from_tree(build_iofpta(traces)?, config)
}

/// Runs the red-blue loop on an existing prefix tree.
pub fn learn_from_tree(tree: Iofpta, config: &LearnerConfig) -> Result<Dlmdp, LearnError> {
    check_significance(config.eps_al)?;
    let n = tree.num_nodes();
    let mut is_red = vec![false; n];
    is_red[0] = true;
    RedBlue { tree, red: vec![0], is_red, scale: hoeffding_scale(config.eps_al) }.run()
}
