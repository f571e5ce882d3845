use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::qtable::{ExtendedState, QTable};
use super::AgentError;
use crate::env::Environment;
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::model::Dlmdp;
use crate::symbol::Symbol;
use crate::trace::{discounted_return, RewardObservationTrace};

/// A fixed behaviour with agent-side memory, run greedily in evaluation.
pub trait Policy: Sync {
    type Memory;
    fn start(&self, obs: Symbol) -> Self::Memory;
    fn act(&self, memory: &Self::Memory, rng: &mut ChaCha8Rng) -> usize;
    fn advance(&self, memory: &Self::Memory, action: Symbol, obs: Symbol) -> Self::Memory;
}

#[derive(Debug, Clone)]
pub struct PoqlAgent {
    pub model: Dlmdp,
    pub q: QTable<ExtendedState>,
    pub actions: Vec<Symbol>,
}

impl Policy for PoqlAgent {
    type Memory = ExtendedState;

    fn start(&self, obs: Symbol) -> ExtendedState {
        ExtendedState::new(obs, self.model.reset_to_initial())
    }

    fn act(&self, memory: &ExtendedState, rng: &mut ChaCha8Rng) -> usize {
        self.q.greedy(memory, rng)
    }

    fn advance(&self, memory: &ExtendedState, action: Symbol, obs: Symbol) -> ExtendedState {
        ExtendedState::new(obs, self.model.step_to(memory.tracker, action, obs))
    }
}

#[derive(Debug, Clone)]
pub struct ObsAgent {
    pub q: QTable<Symbol>,
    pub actions: Vec<Symbol>,
}

impl Policy for ObsAgent {
    type Memory = Symbol;

    fn start(&self, obs: Symbol) -> Symbol {
        obs
    }

    fn act(&self, memory: &Symbol, rng: &mut ChaCha8Rng) -> usize {
        self.q.greedy(memory, rng)
    }

    fn advance(&self, _: &Symbol, _: Symbol, obs: Symbol) -> Symbol {
        obs
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub n_actions: usize,
}

impl Policy for RandomPolicy {
    type Memory = ();

    fn start(&self, _: Symbol) {}

    fn act(&self, _: &(), rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.n_actions)
    }

    fn advance(&self, _: &(), _: Symbol, _: Symbol) {}
}

/// Cycles through a fixed list of action indices, ignoring observations.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub actions: Vec<usize>,
}

impl Policy for ScriptedPolicy {
    type Memory = usize;

    fn start(&self, _: Symbol) -> usize {
        0
    }

    fn act(&self, step: &usize, _: &mut ChaCha8Rng) -> usize {
        self.actions[step % self.actions.len()]
    }

    fn advance(&self, step: &usize, _: Symbol, _: Symbol) -> usize {
        step + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub goals: usize,
    pub goal_rate: f64,
    /// Mean episode length over episodes that reached the goal.
    pub mean_steps: Option<f64>,
    pub mean_return: f64,
}

impl EvalStats {
    pub fn rounded_steps(&self) -> Option<u64> {
        self.mean_steps.map(|m| m.round() as u64)
    }
}

struct Episode {
    goal: bool,
    steps: usize,
    ret: f64,
}

fn run_episode<P: Policy>(policy: &P, env: &Environment, seed: u64, gamma: f64) -> Result<Episode, AgentError> {
    let mut env = env.fork(derive_seed(seed, 0, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let (obs, reward) = env.reset();
    let mut trace = RewardObservationTrace::new(obs, reward);
    let mut memory = policy.start(obs);
    loop {
        let a = policy.act(&memory, &mut rng);
        let action = env.actions()[a];
        let out = env.step_index(a)?;
        trace.push(action, out.reward, out.obs);
        memory = policy.advance(&memory, action, out.obs);
        if out.done {
            let ret = discounted_return(&trace.rewards(), 0, gamma).expect("trace has an initial reward");
            return Ok(Episode { goal: out.goal, steps: trace.len(), ret });
        }
    }
}

pub fn evaluate<P: Policy>(
    policy: &P,
    env: &Environment,
    n_episodes: usize,
    seed: u64,
    gamma: f64,
) -> Result<EvalStats, AgentError> {
    evaluate_with(policy, env, n_episodes, seed, gamma, Execution::default())
}

/// Greedy evaluation. Each episode runs on its own fork of `env` with a seed
/// derived from `(seed, index)`, so results do not depend on `exec`.
pub fn evaluate_with<P: Policy>(
    policy: &P,
    env: &Environment,
    n_episodes: usize,
    seed: u64,
    gamma: f64,
    exec: Execution,
) -> Result<EvalStats, AgentError> {
    if n_episodes == 0 {
        return Err(AgentError::NoEpisodes);
    }
    let episodes = map_indexed(n_episodes, exec, |i| run_episode(policy, env, derive_seed(seed, 0, i as u64), gamma));
    let episodes: Vec<Episode> = episodes.into_iter().collect::<Result<_, _>>()?;
    let goals = episodes.iter().filter(|e| e.goal).count();
    let steps: usize = episodes.iter().filter(|e| e.goal).map(|e| e.steps).sum();
    Ok(EvalStats {
        episodes: n_episodes,
        goals,
        goal_rate: goals as f64 / n_episodes as f64,
        mean_steps: (goals > 0).then(|| steps as f64 / goals as f64),
        mean_return: episodes.iter().map(|e| e.ret).sum::<f64>() / n_episodes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_environment;

    #[test]
    fn zero_episodes_rejected() {
        let env = make_environment("thinmaze", 0).unwrap();
        let err = evaluate(&RandomPolicy { n_actions: 4 }, &env, 0, 1, 0.99).unwrap_err();
        assert_eq!(err, AgentError::NoEpisodes);
    }

    #[test]
    fn random_walk_rarely_solves_thinmaze() {
        let env = make_environment("thinmaze", 0).unwrap();
        let stats = evaluate(&RandomPolicy { n_actions: 4 }, &env, 100, 1, 0.99).unwrap();
        assert!(stats.goal_rate <= 0.05, "{stats:?}");
    }

    #[test]
    fn scripted_route_through_thinmaze() {
        let env = make_environment("thinmaze", 0).unwrap();
        let (r, d, l) = (3, 1, 2);
        let route: Vec<usize> = [vec![r; 5], vec![d; 2], vec![l; 5], vec![d; 2], vec![r; 5], vec![d; 1]].concat();
        let stats = evaluate(&ScriptedPolicy { actions: route }, &env, 10, 1, 0.99).unwrap();
        assert_eq!(stats.goal_rate, 1.0);
        assert_eq!(stats.rounded_steps(), Some(20));
        // reward 100 on the 20th step
        assert!((stats.mean_return - 100.0 * 0.99f64.powi(19)).abs() < 1e-9);
    }

    #[test]
    fn sequential_matches_default() {
        let env = make_environment("gravity", 0).unwrap();
        let p = RandomPolicy { n_actions: 4 };
        let a = evaluate_with(&p, &env, 50, 9, 0.99, Execution::Sequential).unwrap();
        let b = evaluate(&p, &env, 50, 9, 0.99).unwrap();
        assert_eq!(a, b);
    }
}
