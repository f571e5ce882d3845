use std::collections::BTreeSet;

use poql::agent::{baseline_obs_q, train, AgentConfig, Policy, PoqlAgent};
use poql::env::{make_environment, Environment};
use poql::{Pomdp, Symbol};

fn greedy_sequence(agent: &PoqlAgent, steps: &[(&str, &str)]) -> Vec<String> {
    let mut rng = rand::SeedableRng::seed_from_u64(0);
    let mut mem = agent.start(Symbol::new(steps[0].0));
    let mut out = Vec::new();
    for &(_, obs) in steps {
        let a = agent.act(&mem, &mut rng);
        out.push(agent.actions[a].to_string());
        mem = agent.advance(&mem, agent.actions[a], Symbol::new(obs));
    }
    out
}

#[test]
fn hot_beverage_agent_learns_coin_coin_button() {
    let mut env = make_environment("hot_beverage", 0).unwrap();
    let config = AgentConfig { max_episodes: 4000, early_stop: false, ..AgentConfig::default() };
    let run = train(&mut env, &config, 5, None).unwrap();
    let plan = greedy_sequence(&run.agent, &[("init", "beep"), ("beep", "beep"), ("beep", "tea")]);
    assert_eq!(plan, ["coin", "coin", "button"]);
}

/// Same dynamics, and every state gets its own observation.
fn injective(env: &Environment) -> Environment {
    let p = env.ground_truth();
    let n = p.mdp().num_states();
    let obs: Vec<Symbol> = (0..n).map(|s| Symbol::new(&format!("c{s}"))).collect();
    let goals: BTreeSet<usize> = (0..n).filter(|&s| p.is_goal(s)).collect();
    let pomdp = Pomdp::new(p.mdp().clone(), obs, p.rewards().to_vec(), &goals).unwrap();
    Environment::new("injective", pomdp, env.max_steps(), 0).unwrap()
}

#[test]
fn full_observability_matches_baseline() {
    let mut env = injective(&make_environment("officeworld", 0).unwrap());
    let config = AgentConfig::default();
    let oracle = env.oracle_steps(config.gamma).unwrap();
    let poql = train(&mut env, &config, 1, Some(oracle)).unwrap();
    let base = baseline_obs_q(&mut env, &config, 1, Some(oracle)).unwrap();
    let (p, b) = (&poql.evals.last().unwrap().stats, &base.evals.last().unwrap().stats);
    assert_eq!(p.goal_rate, 1.0);
    assert_eq!(b.goal_rate, 1.0);
    assert!((p.mean_steps.unwrap() - b.mean_steps.unwrap()).abs() <= 1.0, "{p:?} vs {b:?}");
}

#[test]
fn training_is_reproducible() {
    let config = AgentConfig { max_episodes: 600, ..AgentConfig::default() };
    let run = |seed| {
        let mut env = make_environment("thinmaze", 0).unwrap();
        let r = train(&mut env, &config, seed, None).unwrap();
        (r.agent.q, r.history, r.relearned_at)
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4).1, run(5).1);
}
