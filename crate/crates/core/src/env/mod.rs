//! Episodic environments behind a reset/step interface.
//!
//! Every environment is a ground-truth [`Pomdp`] plus an episode counter.
//! Agents see observations, rewards, done flags and the action set only.

pub mod grid;
pub mod suite;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ModelError, Pomdp, StateId};
use crate::symbol::Symbol;
use crate::value::{deterministic_rollout, value_iteration};

pub use grid::{GridError, GridSpec, Observe};
pub use suite::{
    grid_environment, grid_spec, hot_beverage_pomdp, make_environment, HotBeverageParams, ENVIRONMENT_NAMES,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("step called after the episode ended")]
    EpisodeDone,
    #[error("unknown action {0}")]
    UnknownAction(Symbol),
    #[error("unknown environment {0:?}")]
    UnknownEnvironment(String),
    #[error("max_steps must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub obs: Symbol,
    pub reward: f64,
    pub done: bool,
    /// True when the episode ended by entering a goal state.
    pub goal: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    name: String,
    pomdp: Pomdp,
    current: StateId,
    step_count: usize,
    max_steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(name: impl Into<String>, pomdp: Pomdp, max_steps: usize, seed: u64) -> Result<Self, EnvError> {
        if max_steps == 0 {
            return Err(EnvError::ZeroHorizon);
        }
        let current = pomdp.mdp().initial();
        Ok(Environment {
            name: name.into(),
            pomdp,
            current,
            step_count: 0,
            max_steps,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn actions(&self) -> &[Symbol] {
        self.pomdp.mdp().actions()
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Ground truth, for oracles and tests. Agents must not read it.
    pub fn ground_truth(&self) -> &Pomdp {
        &self.pomdp
    }

    /// Optimal episode length from value iteration on the ground-truth MDP,
    /// when the optimal policy follows a deterministic path to a goal.
    pub fn oracle_steps(&self, gamma: f64) -> Option<usize> {
        let mdp = self.pomdp.mdp();
        let terminal = self.pomdp.goal_mask();
        let sol = value_iteration(mdp, self.pomdp.rewards(), terminal, gamma, 1e-10).ok()?;
        deterministic_rollout(mdp, &sol.policy, terminal, mdp.initial(), self.max_steps)
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Independent copy with a fresh generator, reset to the initial state.
    pub fn fork(&self, seed: u64) -> Self {
        let mut env = self.clone();
        env.reseed(seed);
        env.reset();
        env
    }

    pub fn reset(&mut self) -> (Symbol, f64) {
        self.current = self.pomdp.mdp().initial();
        self.step_count = 0;
        self.done = false;
        (self.pomdp.obs(self.current), self.pomdp.reward(self.current))
    }

    pub fn step(&mut self, action: Symbol) -> Result<StepOutcome, EnvError> {
        let a = self.pomdp.mdp().action_index(action).ok_or(EnvError::UnknownAction(action))?;
        self.step_index(a)
    }

    pub fn step_index(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let mdp = self.pomdp.mdp();
        if action >= mdp.actions().len() {
            return Err(EnvError::UnknownAction(Symbol::new(&format!("#{action}"))));
        }
        let u: f64 = self.rng.gen();
        self.current = mdp.transition(self.current, action).sample(u);
        self.step_count += 1;
        let goal = self.pomdp.is_goal(self.current);
        self.done = goal || self.step_count >= self.max_steps;
        Ok(StepOutcome {
            obs: self.pomdp.obs(self.current),
            reward: self.pomdp.reward(self.current),
            done: self.done,
            goal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_path_lengths() {
        let steps = |name| make_environment(name, 0).unwrap().oracle_steps(0.99);
        assert_eq!(steps("officeworld"), Some(12));
        assert_eq!(steps("confusing_officeworld"), Some(12));
        assert_eq!(steps("gravity"), Some(21));
        assert_eq!(steps("thinmaze"), Some(20));
    }

    #[test]
    fn protocol_error_after_done() {
        let mut env = make_environment("hot_beverage", 1).unwrap();
        env.reset();
        let mut out = env.step("coin".into()).unwrap();
        while !out.done {
            out = env.step("coin".into()).unwrap();
        }
        assert_eq!(env.step("coin".into()).unwrap_err(), EnvError::EpisodeDone);
        env.reset();
        assert!(env.step("coin".into()).is_ok());
    }

    #[test]
    fn unknown_action() {
        let mut env = make_environment("hot_beverage", 1).unwrap();
        env.reset();
        assert!(matches!(env.step("jump".into()), Err(EnvError::UnknownAction(_))));
    }

    #[test]
    fn seeded_episodes_repeat() {
        let run = |seed| {
            let mut env = make_environment("officeworld", seed).unwrap();
            env.reset();
            let acts = env.actions().to_vec();
            (0..60).map(|i| env.step(acts[i % 4]).map(|o| o.obs)).take_while(Result::is_ok).count()
        };
        let trace = |seed| {
            let mut env = make_environment("gravity", seed).unwrap();
            env.reset();
            let acts = env.actions().to_vec();
            let mut out = Vec::new();
            for i in 0..100 {
                match env.step(acts[(i * 7) % 4]) {
                    Ok(o) => out.push(o.obs),
                    Err(_) => break,
                }
            }
            out
        };
        assert_eq!(run(3), run(3));
        assert_eq!(trace(11), trace(11));
    }
}
