//! Ground-truth and learned model types.
//!
//! [`Mdp`] and [`Pomdp`] describe environments with full transition functions.
//! [`Dlmdp`] is the deterministic labeled MDP produced either by the learner or
//! by the belief construction; its transition function may be partial.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::symbol::Symbol;

/// Tolerance used for every probability-sum check.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// States are dense indices assigned in creation order.
pub type StateId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model has no states")]
    Empty,
    #[error("initial state {0} out of range")]
    BadInitial(StateId),
    #[error("state {state}: expected {expected} action distributions, found {found}")]
    NotTotal { state: StateId, expected: usize, found: usize },
    #[error("state {state}, action {action}: probabilities sum to {sum}")]
    BadDistribution { state: StateId, action: Symbol, sum: f64 },
    #[error("state {state}, action {action}: successor {target} out of range")]
    BadTarget { state: StateId, action: Symbol, target: StateId },
    #[error("state {0} outside observation function domain")]
    UnknownState(StateId),
    #[error("expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("state {state}, action {action}: successors {a} and {b} share label {label}")]
    Nondeterministic { state: StateId, action: Symbol, a: StateId, b: StateId, label: Symbol },
    #[error("unknown action {0}")]
    UnknownAction(Symbol),
}

/// Sparse distribution over successor states, sorted by state id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Distribution {
    entries: Vec<(StateId, f64)>,
}

impl Distribution {
    /// Builds a distribution, merging duplicate targets and dropping zero mass.
    pub fn new(mut entries: Vec<(StateId, f64)>) -> Self {
        entries.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(StateId, f64)> = Vec::with_capacity(entries.len());
        for (s, p) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == s => *acc += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|&(_, p)| p > 0.0);
        Distribution { entries: merged }
    }

    pub fn point(state: StateId) -> Self {
        Distribution { entries: vec![(state, 1.0)] }
    }

    pub fn entries(&self) -> &[(StateId, f64)] {
        &self.entries
    }

    pub fn prob(&self, state: StateId) -> f64 {
        self.entries.binary_search_by_key(&state, |&(s, _)| s).map(|i| self.entries[i].1).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    /// Samples a successor given a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> StateId {
        let mut acc = 0.0;
        for &(s, p) in &self.entries {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.entries.last().expect("sampling an empty distribution").0
    }
}

/// A Markov decision process with a total transition function.
#[derive(Debug, Clone)]
pub struct Mdp {
    initial: StateId,
    actions: Vec<Symbol>,
    /// `delta[state][action index]`
    delta: Vec<Vec<Distribution>>,
}

impl Mdp {
    pub fn new(initial: StateId, actions: Vec<Symbol>, delta: Vec<Vec<Distribution>>) -> Result<Self, ModelError> {
        if delta.is_empty() {
            return Err(ModelError::Empty);
        }
        if initial >= delta.len() {
            return Err(ModelError::BadInitial(initial));
        }
        for (s, row) in delta.iter().enumerate() {
            if row.len() != actions.len() {
                return Err(ModelError::NotTotal { state: s, expected: actions.len(), found: row.len() });
            }
            for (a, dist) in row.iter().enumerate() {
                let sum = dist.total();
                if (sum - 1.0).abs() > PROB_TOLERANCE {
                    return Err(ModelError::BadDistribution { state: s, action: actions[a], sum });
                }
                if let Some(&(t, _)) = dist.entries().iter().find(|&&(t, _)| t >= delta.len()) {
                    return Err(ModelError::BadTarget { state: s, action: actions[a], target: t });
                }
            }
        }
        Ok(Mdp { initial, actions, delta })
    }

    pub fn num_states(&self) -> usize {
        self.delta.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn actions(&self) -> &[Symbol] {
        &self.actions
    }

    pub fn action_index(&self, action: Symbol) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }

    pub fn transition(&self, state: StateId, action: usize) -> &Distribution {
        &self.delta[state][action]
    }
}

/// A POMDP with a deterministic observation function and state rewards.
#[derive(Debug, Clone)]
pub struct Pomdp {
    mdp: Mdp,
    obs: Vec<Symbol>,
    reward: Vec<f64>,
    goal: Vec<bool>,
}

impl Pomdp {
    pub fn new(mdp: Mdp, obs: Vec<Symbol>, reward: Vec<f64>, goals: &BTreeSet<StateId>) -> Result<Self, ModelError> {
        let n = mdp.num_states();
        if obs.len() != n {
            return Err(ModelError::LengthMismatch { expected: n, found: obs.len() });
        }
        if reward.len() != n {
            return Err(ModelError::LengthMismatch { expected: n, found: reward.len() });
        }
        if let Some(&g) = goals.iter().find(|&&g| g >= n) {
            return Err(ModelError::UnknownState(g));
        }
        let goal = (0..n).map(|s| goals.contains(&s)).collect();
        Ok(Pomdp { mdp, obs, reward, goal })
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn obs(&self, state: StateId) -> Symbol {
        self.obs[state]
    }

    pub fn obs_fn(&self) -> &[Symbol] {
        &self.obs
    }

    pub fn reward(&self, state: StateId) -> f64 {
        self.reward[state]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn is_goal(&self, state: StateId) -> bool {
        self.goal[state]
    }

    pub fn goal_mask(&self) -> &[bool] {
        &self.goal
    }

    /// Distinct observations, sorted.
    pub fn observations(&self) -> Vec<Symbol> {
        let set: BTreeSet<Symbol> = self.obs.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Same dynamics and labels with a different goal set.
    pub fn with_goals(&self, goals: &BTreeSet<StateId>) -> Result<Self, ModelError> {
        Pomdp::new(self.mdp.clone(), self.obs.clone(), self.reward.clone(), goals)
    }
}

/// One successor of a learned or constructed transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub target: StateId,
    pub prob: f64,
    /// Folded frequency for learned models; the denominator is the sum over
    /// all successors of the same `(state, action)`.
    pub count: Option<u64>,
}

/// A deterministic labeled MDP. Transitions may be undefined for some
/// `(state, action)` pairs.
#[derive(Debug, Clone)]
pub struct Dlmdp {
    initial: StateId,
    actions: Vec<Symbol>,
    labels: Vec<Symbol>,
    /// `trans[state][action index]`, empty when undefined.
    trans: Vec<Vec<Vec<Transition>>>,
    index: HashMap<(StateId, Symbol, Symbol), StateId>,
}

impl Dlmdp {
    /// Builds and validates a model. Successor lists are sorted by target.
    pub fn new(
        initial: StateId,
        actions: Vec<Symbol>,
        labels: Vec<Symbol>,
        mut trans: Vec<Vec<Vec<Transition>>>,
    ) -> Result<Self, ModelError> {
        let n = labels.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        if initial >= n {
            return Err(ModelError::BadInitial(initial));
        }
        if trans.len() != n {
            return Err(ModelError::LengthMismatch { expected: n, found: trans.len() });
        }
        let mut index = HashMap::new();
        for (s, row) in trans.iter_mut().enumerate() {
            if row.len() != actions.len() {
                return Err(ModelError::NotTotal { state: s, expected: actions.len(), found: row.len() });
            }
            for (a, succ) in row.iter_mut().enumerate() {
                succ.sort_by_key(|t| t.target);
                if succ.is_empty() {
                    continue;
                }
                let sum: f64 = succ.iter().map(|t| t.prob).sum();
                if (sum - 1.0).abs() > PROB_TOLERANCE {
                    return Err(ModelError::BadDistribution { state: s, action: actions[a], sum });
                }
                for t in succ.iter() {
                    if t.target >= n {
                        return Err(ModelError::BadTarget { state: s, action: actions[a], target: t.target });
                    }
                    if t.prob <= 0.0 {
                        continue;
                    }
                    let label = labels[t.target];
                    if let Some(&other) = index.get(&(s, actions[a], label)) {
                        if other != t.target {
                            return Err(ModelError::Nondeterministic {
                                state: s,
                                action: actions[a],
                                a: other,
                                b: t.target,
                                label,
                            });
                        }
                    }
                    index.insert((s, actions[a], label), t.target);
                }
            }
        }
        Ok(Dlmdp { initial, actions, labels, trans, index })
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn actions(&self) -> &[Symbol] {
        &self.actions
    }

    pub fn action_index(&self, action: Symbol) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }

    pub fn label(&self, state: StateId) -> Symbol {
        self.labels[state]
    }

    pub fn labels(&self) -> &[Symbol] {
        &self.labels
    }

    /// Successors of `(state, action)`; empty when the transition is undefined.
    pub fn successors(&self, state: StateId, action: usize) -> &[Transition] {
        &self.trans[state][action]
    }

    /// The unique successor reached by `action` with observation `obs`.
    pub fn successor(&self, state: StateId, action: Symbol, obs: Symbol) -> Option<StateId> {
        self.index.get(&(state, action, obs)).copied()
    }

    /// Checks the determinism property: among positive-probability successors
    /// of any `(state, action)`, labels are pairwise distinct.
    pub fn check_deterministic(&self) -> Result<(), ModelError> {
        for (s, row) in self.trans.iter().enumerate() {
            for (a, succ) in row.iter().enumerate() {
                let mut seen: HashMap<Symbol, StateId> = HashMap::new();
                for t in succ.iter().filter(|t| t.prob > 0.0) {
                    let label = self.labels[t.target];
                    if let Some(&prev) = seen.get(&label) {
                        if prev != t.target {
                            return Err(ModelError::Nondeterministic {
                                state: s,
                                action: self.actions[a],
                                a: prev,
                                b: t.target,
                                label,
                            });
                        }
                    }
                    seen.insert(label, t.target);
                }
            }
        }
        Ok(())
    }

    /// States reachable from the initial state, in breadth-first order.
    pub fn reachable(&self) -> Vec<StateId> {
        let mut seen = vec![false; self.num_states()];
        let mut order = vec![self.initial];
        seen[self.initial] = true;
        let mut i = 0;
        while i < order.len() {
            let s = order[i];
            i += 1;
            for succ in &self.trans[s] {
                for t in succ {
                    if t.prob > 0.0 && !seen[t.target] {
                        seen[t.target] = true;
                        order.push(t.target);
                    }
                }
            }
        }
        order
    }

    pub fn reset_to_initial(&self) -> TrackerState {
        TrackerState { state: self.initial, defined: true }
    }

    /// Advances a tracker by one `(action, observation)` step. Undefined
    /// behaviour is absorbing: the last defined state is kept with `defined = false`.
    pub fn step_to(&self, tracker: TrackerState, action: Symbol, obs: Symbol) -> TrackerState {
        if tracker.defined {
            if let Some(next) = self.successor(tracker.state, action, obs) {
                return TrackerState { state: next, defined: true };
            }
        }
        TrackerState { state: tracker.state, defined: false }
    }

    /// Converts a model with total transitions into an [`Mdp`]. Undefined
    /// `(state, action)` pairs become self-loops.
    pub fn to_mdp(&self) -> Mdp {
        let delta = self
            .trans
            .iter()
            .enumerate()
            .map(|(s, row)| {
                row.iter()
                    .map(|succ| {
                        if succ.is_empty() {
                            Distribution::point(s)
                        } else {
                            Distribution::new(succ.iter().map(|t| (t.target, t.prob)).collect())
                        }
                    })
                    .collect()
            })
            .collect();
        Mdp { initial: self.initial, actions: self.actions.clone(), delta }
    }
}

/// Position of a tracker in a learned model plus the definedness flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackerState {
    pub state: StateId,
    pub defined: bool,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::symbol::symbols;

    /// Two-state model shaped like the finite Hot Beverage belief MDP prefix:
    /// b0 --coin:1--> b1, b0 --button:1--> b0.
    pub(crate) fn tiny_model() -> Dlmdp {
        let actions = symbols(&["coin", "button"]);
        let labels = symbols(&["init", "beep"]);
        let t = |target| vec![Transition { target, prob: 1.0, count: None }];
        Dlmdp::new(0, actions, labels, vec![vec![t(1), t(0)], vec![vec![], vec![]]]).unwrap()
    }

    #[test]
    fn mdp_rejects_partial_delta() {
        let err = Mdp::new(0, symbols(&["a", "b"]), vec![vec![Distribution::point(0)]]).unwrap_err();
        assert!(matches!(err, ModelError::NotTotal { .. }));
    }

    #[test]
    fn mdp_rejects_bad_sum() {
        let d = Distribution::new(vec![(0, 0.5), (0, 0.4)]);
        let err = Mdp::new(0, symbols(&["a"]), vec![vec![d]]).unwrap_err();
        assert!(matches!(err, ModelError::BadDistribution { .. }));
    }

    #[test]
    fn distribution_merges_duplicates() {
        let d = Distribution::new(vec![(2, 0.25), (1, 0.5), (2, 0.25), (3, 0.0)]);
        assert_eq!(d.entries(), &[(1, 0.5), (2, 0.5)]);
        assert_eq!(d.sample(0.49), 1);
        assert_eq!(d.sample(0.51), 2);
    }

    #[test]
    fn dlmdp_rejects_shared_labels() {
        let actions = symbols(&["coin"]);
        let labels = symbols(&["init", "beep", "beep"]);
        let succ =
            vec![Transition { target: 1, prob: 0.5, count: None }, Transition { target: 2, prob: 0.5, count: None }];
        let err = Dlmdp::new(0, actions, labels, vec![vec![succ], vec![vec![]], vec![vec![]]]).unwrap_err();
        assert!(matches!(err, ModelError::Nondeterministic { .. }));
    }

    #[test]
    fn reset_is_initial_and_defined() {
        let m = tiny_model();
        assert_eq!(m.reset_to_initial(), TrackerState { state: 0, defined: true });
    }

    #[test]
    fn step_to_follows_matching_label() {
        let m = tiny_model();
        let t = m.step_to(m.reset_to_initial(), "coin".into(), "beep".into());
        assert_eq!(t, TrackerState { state: 1, defined: true });
    }

    #[test]
    fn step_to_mismatch_keeps_state() {
        let m = tiny_model();
        let t = m.step_to(m.reset_to_initial(), "coin".into(), "coffee".into());
        assert_eq!(t, TrackerState { state: 0, defined: false });
    }

    #[test]
    fn undefined_is_absorbing() {
        let m = tiny_model();
        let stuck = TrackerState { state: 0, defined: false };
        assert_eq!(m.step_to(stuck, "button".into(), "init".into()), stuck);
        assert_eq!(m.step_to(stuck, "coin".into(), "beep".into()), stuck);
    }

    #[test]
    fn undefined_transitions_become_self_loops() {
        let mdp = tiny_model().to_mdp();
        assert_eq!(mdp.transition(1, 0).entries(), &[(1, 1.0)]);
    }
}
