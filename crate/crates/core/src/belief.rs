//! Exact belief tracking and belief-MDP construction for known POMDPs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::model::{Dlmdp, Mdp, ModelError, Pomdp, StateId, Transition, PROB_TOLERANCE};
use crate::symbol::Symbol;

/// L-infinity distance under which two beliefs are identified.
pub const BELIEF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("observation {obs} has probability zero after action {action}")]
    ImpossibleObservation { action: Symbol, obs: Symbol },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A distribution over POMDP states, sorted by state id.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    support: Vec<(StateId, f64)>,
}

impl Belief {
    pub fn point(state: StateId) -> Self {
        Belief { support: vec![(state, 1.0)] }
    }

    pub fn from_pairs(mut pairs: Vec<(StateId, f64)>) -> Self {
        pairs.sort_by_key(|&(s, _)| s);
        pairs.retain(|&(_, p)| p > 0.0);
        Belief { support: pairs }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn prob(&self, state: StateId) -> f64 {
        self.support.binary_search_by_key(&state, |&(s, _)| s).map(|i| self.support[i].1).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|&(_, p)| p).sum()
    }

    pub fn distance(&self, other: &Belief) -> f64 {
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.support, &other.support);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(sa, pa)), Some(&(sb, pb))) if sa == sb => {
                    d = d.max((pa - pb).abs());
                    i += 1;
                    j += 1;
                }
                (Some(&(sa, pa)), Some(&(sb, _))) if sa < sb => {
                    d = d.max(pa);
                    i += 1;
                }
                (Some(&(_, pa)), None) => {
                    d = d.max(pa);
                    i += 1;
                }
                (_, Some(&(_, pb))) => {
                    d = d.max(pb);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        d
    }

    /// The shared observation of the support.
    pub fn label(&self, pomdp: &Pomdp) -> Symbol {
        pomdp.obs(self.support[0].0)
    }

    pub fn expected_reward(&self, pomdp: &Pomdp) -> f64 {
        self.support.iter().map(|&(s, p)| p * pomdp.reward(s)).sum()
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.support.iter().map(|(s, p)| format!("s{s}:{p}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Unnormalized successor mass of `b` under `action`, grouped by observation.
fn successor_mass(b: &Belief, action: usize, pomdp: &Pomdp) -> BTreeMap<Symbol, BTreeMap<StateId, f64>> {
    let mut out: BTreeMap<Symbol, BTreeMap<StateId, f64>> = BTreeMap::new();
    for &(s, bs) in b.support() {
        for &(t, p) in pomdp.mdp().transition(s, action).entries() {
            *out.entry(pomdp.obs(t)).or_default().entry(t).or_default() += bs * p;
        }
    }
    out
}

fn action_index(pomdp: &Pomdp, action: Symbol) -> Result<usize, BeliefError> {
    pomdp.mdp().action_index(action).ok_or(BeliefError::Model(ModelError::UnknownAction(action)))
}

/// `P(b, a, z) = sum_s b(s) * P(s, a, z)`.
pub fn observation_probability(b: &Belief, action: Symbol, obs: Symbol, pomdp: &Pomdp) -> Result<f64, BeliefError> {
    let a = action_index(pomdp, action)?;
    let mut total = 0.0;
    for &(s, bs) in b.support() {
        let p: f64 =
            pomdp.mdp().transition(s, a).entries().iter().filter(|&&(t, _)| pomdp.obs(t) == obs).map(|&(_, p)| p).sum();
        total += bs * p;
    }
    Ok(total)
}

/// `[b | a, z](s') = sum_s b(s) * delta(s, a, s') / P(b, a, z)` for `O(s') = z`.
pub fn belief_update(b: &Belief, action: Symbol, obs: Symbol, pomdp: &Pomdp) -> Result<Belief, BeliefError> {
    let a = action_index(pomdp, action)?;
    let mass = successor_mass(b, a, pomdp);
    let Some(weights) = mass.get(&obs) else {
        return Err(BeliefError::ImpossibleObservation { action, obs });
    };
    let norm: f64 = weights.values().sum();
    if norm <= 0.0 {
        return Err(BeliefError::ImpossibleObservation { action, obs });
    }
    Ok(Belief::from_pairs(weights.iter().map(|(&s, &w)| (s, w / norm)).collect()))
}

/// The reachable belief MDP of a POMDP, possibly truncated.
#[derive(Debug, Clone)]
pub struct BeliefMdp {
    pub model: Dlmdp,
    pub beliefs: Vec<Belief>,
    pub truncated: bool,
}

impl BeliefMdp {
    /// Finds the belief state whose distribution matches `b`.
    pub fn find(&self, b: &Belief) -> Option<StateId> {
        self.beliefs.iter().position(|x| x.distance(b) <= BELIEF_TOLERANCE)
    }

    /// Plain MDP, expected state rewards and terminal mask for value iteration.
    /// A belief is terminal when its whole support consists of goal states.
    pub fn value_problem(&self, pomdp: &Pomdp) -> (Mdp, Vec<f64>, Vec<bool>) {
        let rewards = self.beliefs.iter().map(|b| b.expected_reward(pomdp)).collect();
        let terminal = self.beliefs.iter().map(|b| b.support().iter().all(|&(s, _)| pomdp.is_goal(s))).collect();
        (self.model.to_mdp(), rewards, terminal)
    }

    pub fn tooltips(&self) -> Vec<String> {
        self.beliefs.iter().map(|b| b.to_string()).collect()
    }
}

/// Breadth-first closure of the beliefs reachable from `{s0 -> 1}`.
///
/// Beliefs within [`BELIEF_TOLERANCE`] are identified. Branches whose
/// probability is below `prob_floor` are dropped and the kept branches
/// renormalized. A state whose expansion would exceed `max_states` is left
/// absorbing (self-loops on every action) and the result is flagged truncated.
pub fn build_belief_mdp(pomdp: &Pomdp, max_states: usize, prob_floor: f64) -> Result<BeliefMdp, BeliefError> {
    let max_states = max_states.max(1);
    let actions = pomdp.mdp().actions().to_vec();
    let mut beliefs = vec![Belief::point(pomdp.mdp().initial())];
    let mut labels = vec![pomdp.obs(pomdp.mdp().initial())];
    let mut by_label: HashMap<Symbol, Vec<StateId>> = HashMap::new();
    by_label.entry(labels[0]).or_default().push(0);
    let mut trans: Vec<Vec<Vec<Transition>>> = vec![vec![Vec::new(); actions.len()]];
    let mut queue = VecDeque::from([0usize]);
    let mut truncated = false;

    let lookup = |beliefs: &[Belief], by_label: &HashMap<Symbol, Vec<StateId>>, label: Symbol, b: &Belief| {
        by_label.get(&label).and_then(|ids| ids.iter().copied().find(|&id| beliefs[id].distance(b) <= BELIEF_TOLERANCE))
    };

    while let Some(current) = queue.pop_front() {
        // Successors per action: (label, belief, probability).
        let mut planned: Vec<Vec<(Symbol, Belief, f64)>> = Vec::with_capacity(actions.len());
        for a in 0..actions.len() {
            let mass = successor_mass(&beliefs[current], a, pomdp);
            let mut branches: Vec<(Symbol, Belief, f64)> = mass
                .into_iter()
                .filter_map(|(z, weights)| {
                    let p: f64 = weights.values().sum();
                    if p <= 0.0 || p < prob_floor {
                        return None;
                    }
                    let b = Belief::from_pairs(weights.iter().map(|(&s, &w)| (s, w / p)).collect());
                    Some((z, b, p))
                })
                .collect();
            let kept: f64 = branches.iter().map(|x| x.2).sum();
            if kept > 0.0 && (kept - 1.0).abs() > PROB_TOLERANCE {
                for br in &mut branches {
                    br.2 /= kept;
                }
            }
            planned.push(branches);
        }

        let mut fresh: Vec<(Symbol, Belief)> = Vec::new();
        for (z, b, _) in planned.iter().flatten() {
            let known = lookup(&beliefs, &by_label, *z, b).is_some()
                || fresh.iter().any(|(fz, fb)| fz == z && fb.distance(b) <= BELIEF_TOLERANCE);
            if !known {
                fresh.push((*z, b.clone()));
            }
        }
        if beliefs.len() + fresh.len() > max_states {
            truncated = true;
            for slot in trans[current].iter_mut() {
                *slot = vec![Transition { target: current, prob: 1.0, count: None }];
            }
            continue;
        }

        for (a, branches) in planned.into_iter().enumerate() {
            let mut succ = Vec::with_capacity(branches.len());
            for (z, b, p) in branches {
                let id = match lookup(&beliefs, &by_label, z, &b) {
                    Some(id) => id,
                    None => {
                        let id = beliefs.len();
                        beliefs.push(b);
                        labels.push(z);
                        by_label.entry(z).or_default().push(id);
                        trans.push(vec![Vec::new(); actions.len()]);
                        queue.push_back(id);
                        id
                    }
                };
                succ.push(Transition { target: id, prob: p, count: None });
            }
            trans[current][a] = succ;
        }
    }

    let model = Dlmdp::new(0, actions, labels, trans)?;
    Ok(BeliefMdp { model, beliefs, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::suite::{hot_beverage_pomdp, HotBeverageParams};
    use std::collections::BTreeSet;

    fn fig3() -> Pomdp {
        hot_beverage_pomdp(&HotBeverageParams { p_t: 0.2, p_cc: 1.0, p_tt: 0.2, ..Default::default() }).unwrap()
    }

    fn fig2() -> Pomdp {
        hot_beverage_pomdp(&HotBeverageParams { p_t: 0.1, p_cc: 0.5, p_tt: 0.5, ..Default::default() }).unwrap()
    }

    fn close(b: &Belief, expected: &[(StateId, f64)]) -> bool {
        b.distance(&Belief::from_pairs(expected.to_vec())) < 1e-9
    }

    #[test]
    fn coin_always_beeps() {
        let p = observation_probability(&Belief::point(0), "coin".into(), "beep".into(), &fig3()).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn button_coffee_probability() {
        let b = Belief::from_pairs(vec![(1, 0.8), (2, 0.2)]);
        let p = observation_probability(&b, "button".into(), "coffee".into(), &fig3()).unwrap();
        assert!((p - 0.8).abs() < 1e-12);
    }

    #[test]
    fn unreachable_observation_has_zero_probability() {
        let p = observation_probability(&Belief::point(0), "coin".into(), "tea".into(), &fig3()).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn updates_match_figures() {
        let pomdp = fig3();
        let b1 = belief_update(&Belief::point(0), "coin".into(), "beep".into(), &pomdp).unwrap();
        assert!(close(&b1, &[(1, 0.8), (2, 0.2)]));
        let b2 = belief_update(&b1, "coin".into(), "beep".into(), &pomdp).unwrap();
        assert!(close(&b2, &[(1, 0.96), (2, 0.04)]));
        let f2 = belief_update(&Belief::point(0), "coin".into(), "beep".into(), &fig2()).unwrap();
        assert!(close(&f2, &[(1, 0.9), (2, 0.1)]));
    }

    #[test]
    fn impossible_observation_errors() {
        let err = belief_update(&Belief::point(0), "coin".into(), "tea".into(), &fig3()).unwrap_err();
        assert!(matches!(err, BeliefError::ImpossibleObservation { .. }));
    }

    #[test]
    fn finite_belief_mdp_has_five_states() {
        let bm = build_belief_mdp(&fig2(), 100, 0.0).unwrap();
        assert!(!bm.truncated);
        assert_eq!(bm.model.num_states(), 5);
        bm.model.check_deterministic().unwrap();
    }

    #[test]
    fn infinite_chain_truncates() {
        let bm = build_belief_mdp(&fig3(), 6, 0.0).unwrap();
        assert!(bm.truncated);
        assert_eq!(bm.model.num_states(), 6);
        let frontier = bm.find(&Belief::from_pairs(vec![(1, 0.992), (2, 0.008)])).unwrap();
        for a in 0..2 {
            let succ = bm.model.successors(frontier, a);
            assert_eq!(succ.len(), 1);
            assert_eq!(succ[0].target, frontier);
        }
    }

    #[test]
    fn injective_observations_reproduce_the_mdp() {
        let base = fig2();
        let obs: Vec<Symbol> = (0..5).map(|i| Symbol::new(&format!("o{i}"))).collect();
        let pomdp = Pomdp::new(base.mdp().clone(), obs, base.rewards().to_vec(), &BTreeSet::new()).unwrap();
        let bm = build_belief_mdp(&pomdp, 100, 0.0).unwrap();
        assert_eq!(bm.model.num_states(), 5);
        for (id, b) in bm.beliefs.iter().enumerate() {
            assert_eq!(b.support().len(), 1);
            let s = b.support()[0].0;
            for a in 0..2 {
                for t in bm.model.successors(id, a) {
                    let target = bm.beliefs[t.target].support()[0].0;
                    assert!((pomdp.mdp().transition(s, a).prob(target) - t.prob).abs() < 1e-12);
                }
            }
        }
    }
}
