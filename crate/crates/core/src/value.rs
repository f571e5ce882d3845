//! Value iteration over fully known MDPs.
//!
//! Rewards are collected on entering a state, so the value of a state one
//! step before a terminal goal is the goal reward itself. Terminal states have
//! value zero.

use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::model::{Mdp, StateId};

#[derive(Debug, Error, PartialEq)]
pub enum ValueError {
    #[error("discount must lie in [0, 1), got {0}")]
    BadDiscount(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    /// Greedy action index per state; lowest index wins ties.
    pub policy: Vec<usize>,
    pub iterations: usize,
}

fn q_value(mdp: &Mdp, rewards: &[f64], terminal: &[bool], values: &[f64], gamma: f64, s: StateId, a: usize) -> f64 {
    mdp.transition(s, a)
        .entries()
        .iter()
        .map(|&(t, p)| p * (rewards[t] + if terminal[t] { 0.0 } else { gamma * values[t] }))
        .sum()
}

fn backup(mdp: &Mdp, rewards: &[f64], terminal: &[bool], values: &[f64], gamma: f64, s: StateId) -> (f64, usize) {
    if terminal[s] {
        return (0.0, 0);
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for a in 0..mdp.actions().len() {
        let q = q_value(mdp, rewards, terminal, values, gamma, s, a);
        if q > best.0 {
            best = (q, a);
        }
    }
    best
}

pub fn value_iteration(
    mdp: &Mdp,
    rewards: &[f64],
    terminal: &[bool],
    gamma: f64,
    tol: f64,
) -> Result<ValueSolution, ValueError> {
    value_iteration_with(mdp, rewards, terminal, gamma, tol, Execution::default())
}

/// Jacobi-style value iteration; each sweep backs up all states from the
/// previous value vector, optionally in parallel.
pub fn value_iteration_with(
    mdp: &Mdp,
    rewards: &[f64],
    terminal: &[bool],
    gamma: f64,
    tol: f64,
    exec: Execution,
) -> Result<ValueSolution, ValueError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(ValueError::BadDiscount(gamma));
    }
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    if !(tol > 0.0) {
        return Err(ValueError::BadTolerance(tol));
    }
    let n = mdp.num_states();
    for len in [rewards.len(), terminal.len()] {
        if len != n {
            return Err(ValueError::LengthMismatch { expected: n, found: len });
        }
    }
    let mut values = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = map_indexed(n, exec, |s| backup(mdp, rewards, terminal, &values, gamma, s));
        let residual = next.iter().zip(&values).map(|(&(v, _), &old)| (v - old).abs()).fold(0.0, f64::max);
        values = next.iter().map(|&(v, _)| v).collect();
        if residual < tol {
            let policy = next.into_iter().map(|(_, a)| a).collect();
            return Ok(ValueSolution { values, policy, iterations });
        }
    }
}

/// Follows `policy` from `start` while every step is deterministic and
/// returns the number of steps to the first terminal state.
pub fn deterministic_rollout(
    mdp: &Mdp,
    policy: &[usize],
    terminal: &[bool],
    start: StateId,
    max_steps: usize,
) -> Option<usize> {
    let mut s = start;
    for step in 0..max_steps {
        if terminal[s] {
            return Some(step);
        }
        match mdp.transition(s, policy[s]).entries() {
            [(t, _)] => s = *t,
            _ => return None,
        }
    }
    terminal[s].then_some(max_steps)
}
