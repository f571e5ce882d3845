//! Q-learning over observations extended by the state of a learned model.
//!
//! Training interleaves episodes of epsilon-greedy Q-learning with periodic
//! relearning of the model from every trace seen so far. After each relearn
//! the table is reset and rebuilt by replaying the whole history through the
//! new model. Relearning stops at `freeze_after`.

mod eval;
mod qtable;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alergia::{run_ioalergia, LearnError, LearnerConfig};
use crate::env::{EnvError, Environment};
use crate::exec::derive_seed;
use crate::model::Dlmdp;
use crate::symbol::Symbol;
use crate::trace::RewardObservationTrace;

pub use eval::{evaluate, evaluate_with, EvalStats, ObsAgent, Policy, PoqlAgent, RandomPolicy, ScriptedPolicy};
pub use qtable::{get_action, update_q_values, ExtendedState, QKey, QTable, QTableParseError};

const AGENT_STREAM: u64 = 0;
const ENV_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("evaluation needs at least one episode")]
    NoEpisodes,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

fn default_alpha() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.99
}
fn default_epsilon_start() -> f64 {
    1.0
}
fn default_epsilon_end() -> f64 {
    0.1
}
fn default_update_interval() -> usize {
    1000
}
fn default_max_episodes() -> usize {
    30_000
}
fn default_eps_al() -> f64 {
    0.05
}
fn default_bootstrap() -> usize {
    500
}
fn default_eval_every() -> usize {
    1000
}
fn default_eval_episodes() -> usize {
    100
}
fn default_target() -> f64 {
    1.0
}
fn default_steps_tolerance() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_epsilon_start")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_end")]
    pub epsilon_end: f64,
    /// Defaults to half of `max_episodes`.
    #[serde(default)]
    pub epsilon_decay_episodes: Option<usize>,
    #[serde(default = "default_update_interval")]
    pub update_interval: usize,
    /// Defaults to `ceil(0.75 * max_episodes)`.
    #[serde(default)]
    pub freeze_after: Option<usize>,
    #[serde(default = "default_max_episodes")]
    pub max_episodes: usize,
    #[serde(default = "default_eps_al")]
    pub eps_al: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_episodes: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_target")]
    pub target_goal_rate: f64,
    /// Relative slack on the oracle step count for early stopping.
    #[serde(default = "default_steps_tolerance")]
    pub steps_tolerance: f64,
    #[serde(default = "default_true")]
    pub early_stop: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AgentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl AgentConfig {
    pub fn freeze_after(&self) -> usize {
        self.freeze_after.unwrap_or_else(|| (self.max_episodes * 3).div_ceil(4))
    }

    pub fn epsilon_decay_episodes(&self) -> usize {
        self.epsilon_decay_episodes.unwrap_or(self.max_episodes / 2)
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let decay = self.epsilon_decay_episodes();
        if decay == 0 || episode >= decay {
            return self.epsilon_end;
        }
        let frac = episode as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn learner(&self) -> LearnerConfig {
        LearnerConfig { eps_al: self.eps_al, ..LearnerConfig::default() }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::Config(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("{name} must lie in [0, 1], got {e}"));
            }
        }
        if self.update_interval == 0 {
            return bad("update_interval must be at least 1".into());
        }
        if self.freeze_after() > self.max_episodes {
            return bad(format!("freeze_after {} exceeds max_episodes {}", self.freeze_after(), self.max_episodes));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be at least 1".into());
        }
        if !(self.eps_al > 0.0 && self.eps_al <= 1.0) {
            return bad(format!("eps_al must lie in (0, 1], got {}", self.eps_al));
        }
        Ok(())
    }

    fn satisfied(&self, stats: &EvalStats, oracle_steps: Option<usize>) -> bool {
        if stats.goal_rate < self.target_goal_rate {
            return false;
        }
        match (oracle_steps, stats.mean_steps) {
            (Some(opt), Some(mean)) => mean <= opt as f64 * (1.0 + self.steps_tolerance),
            (Some(_), None) => false,
            (None, _) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    /// Training episodes completed.
    pub episode: usize,
    pub stats: EvalStats,
    pub model_states: usize,
    pub q_rows: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun<A> {
    pub agent: A,
    pub history: Vec<RewardObservationTrace>,
    pub evals: Vec<EvalPoint>,
    pub episodes: usize,
    pub stopped_early: bool,
    /// Episode indices at which the model was relearned.
    pub relearned_at: Vec<usize>,
}

/// One epsilon-greedy learning episode. `advance` maps the current key, the
/// action and the new observation to the next key.
fn learning_episode<K, F, R>(
    env: &mut Environment,
    q: &mut QTable<K>,
    start: impl FnOnce(Symbol) -> K,
    advance: F,
    epsilon: f64,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<RewardObservationTrace, AgentError>
where
    K: QKey,
    F: Fn(&K, Symbol, Symbol) -> K,
    R: Rng,
{
    let (obs, reward) = env.reset();
    let mut trace = RewardObservationTrace::new(obs, reward);
    let mut s = start(obs);
    loop {
        let a = get_action(q, &s, epsilon, rng);
        let action = env.actions()[a];
        let out = env.step_index(a)?;
        let next = advance(&s, action, out.obs);
        update_q_values(q, s, a, out.reward, &next, config.alpha, config.gamma);
        trace.push(action, out.reward, out.obs);
        s = next;
        if out.done {
            return Ok(trace);
        }
    }
}

/// One online training episode of `agent` against its current model.
pub fn online_episode<R: Rng>(
    env: &mut Environment,
    agent: &mut PoqlAgent,
    epsilon: f64,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<RewardObservationTrace, AgentError> {
    let model = &agent.model;
    learning_episode(
        env,
        &mut agent.q,
        |o| ExtendedState::new(o, model.reset_to_initial()),
        |s, a, o| ExtendedState::new(o, model.step_to(s.tracker, a, o)),
        epsilon,
        config,
        rng,
    )
}

/// Uniformly random actions until the episode ends.
pub fn random_episode<R: Rng>(env: &mut Environment, rng: &mut R) -> Result<RewardObservationTrace, AgentError> {
    let (obs, reward) = env.reset();
    let mut trace = RewardObservationTrace::new(obs, reward);
    loop {
        let a = rng.gen_range(0..env.actions().len());
        let out = env.step_index(a)?;
        trace.push(env.actions()[a], out.reward, out.obs);
        if out.done {
            return Ok(trace);
        }
    }
}

/// Rebuilds a zero table by replaying `history` in order through `model`.
pub fn replay(
    q: &mut QTable<ExtendedState>,
    model: &Dlmdp,
    history: &[RewardObservationTrace],
    actions: &[Symbol],
    alpha: f64,
    gamma: f64,
) {
    for trace in history {
        let mut s = ExtendedState::new(trace.initial_obs, model.reset_to_initial());
        for step in &trace.steps {
            let a = actions.iter().position(|&x| x == step.action).expect("action in action set");
            let next = ExtendedState::new(step.obs, model.step_to(s.tracker, step.action, step.obs));
            update_q_values(q, s, a, step.reward, &next, alpha, gamma);
            s = next;
        }
    }
}

struct Trainer<'a> {
    env: &'a mut Environment,
    config: &'a AgentConfig,
    seed: u64,
    oracle_steps: Option<usize>,
    started: Instant,
}

impl Trainer<'_> {
    fn evaluate_point<P: Policy>(
        &self,
        policy: &P,
        k: usize,
        episode: usize,
        model_states: usize,
        q_rows: usize,
    ) -> Result<EvalPoint, AgentError> {
        let seed = derive_seed(self.seed, EVAL_STREAM, k as u64);
        let stats = evaluate(policy, self.env, self.config.eval_episodes, seed, self.config.gamma)?;
        Ok(EvalPoint { episode, stats, model_states, q_rows, wall_time: self.started.elapsed().as_secs_f64() })
    }

    fn is_eval_point(&self, episode: usize) -> bool {
        episode.is_multiple_of(self.config.eval_every) || episode == self.config.max_episodes
    }
}

/// Trains the model-extended agent. `oracle_steps`, when known, tightens the
/// early-stopping rule to near-optimal episode length.
pub fn train(
    env: &mut Environment,
    config: &AgentConfig,
    seed: u64,
    oracle_steps: Option<usize>,
) -> Result<TrainingRun<PoqlAgent>, AgentError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM, 0));
    env.reseed(derive_seed(seed, ENV_STREAM, 0));
    let actions = env.actions().to_vec();
    let mut history = Vec::new();
    for _ in 0..config.bootstrap_episodes.max(1) {
        history.push(random_episode(env, &mut rng)?);
    }
    let learner = config.learner();
    let mut agent = PoqlAgent {
        model: run_ioalergia(&history, &learner)?,
        q: QTable::new(actions.len()),
        actions: actions.clone(),
    };
    let trainer = Trainer { env, config, seed, oracle_steps, started: Instant::now() };
    let mut evals = Vec::new();
    let mut relearned_at = Vec::new();
    let mut stopped_early = false;
    let mut episodes = 0;
    let freeze = config.freeze_after();
    for ep in 0..config.max_episodes {
        if ep % config.update_interval == 0 && ep < freeze {
            if ep > 0 {
                agent.model = run_ioalergia(&history, &learner)?;
            }
            agent.q = QTable::new(actions.len());
            replay(&mut agent.q, &agent.model, &history, &actions, config.alpha, config.gamma);
            relearned_at.push(ep);
        }
        let trace = online_episode(trainer.env, &mut agent, config.epsilon(ep), config, &mut rng)?;
        history.push(trace);
        episodes = ep + 1;
        if trainer.is_eval_point(episodes) {
            let point =
                trainer.evaluate_point(&agent, evals.len(), episodes, agent.model.num_states(), agent.q.len())?;
            let done = config.early_stop && config.satisfied(&point.stats, trainer.oracle_steps);
            evals.push(point);
            if done {
                stopped_early = episodes < config.max_episodes;
                break;
            }
        }
    }
    trainer.env.reseed(derive_seed(seed, ENV_STREAM, 1));
    Ok(TrainingRun { agent, history, evals, episodes, stopped_early, relearned_at })
}

/// Same loop as [`train`] with Q over raw observations and no model.
pub fn baseline_obs_q(
    env: &mut Environment,
    config: &AgentConfig,
    seed: u64,
    oracle_steps: Option<usize>,
) -> Result<TrainingRun<ObsAgent>, AgentError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM, 0));
    env.reseed(derive_seed(seed, ENV_STREAM, 0));
    let actions = env.actions().to_vec();
    let mut agent = ObsAgent { q: QTable::new(actions.len()), actions };
    let trainer = Trainer { env, config, seed, oracle_steps, started: Instant::now() };
    let mut history = Vec::new();
    let mut evals = Vec::new();
    let mut stopped_early = false;
    let mut episodes = 0;
    for ep in 0..config.max_episodes {
        let trace =
            learning_episode(trainer.env, &mut agent.q, |o| o, |_, _, o| o, config.epsilon(ep), config, &mut rng)?;
        history.push(trace);
        episodes = ep + 1;
        if trainer.is_eval_point(episodes) {
            let point = trainer.evaluate_point(&agent, evals.len(), episodes, 0, agent.q.len())?;
            let done = config.early_stop && config.satisfied(&point.stats, trainer.oracle_steps);
            evals.push(point);
            if done {
                stopped_early = episodes < config.max_episodes;
                break;
            }
        }
    }
    Ok(TrainingRun { agent, history, evals, episodes, stopped_early, relearned_at: Vec::new() })
}
