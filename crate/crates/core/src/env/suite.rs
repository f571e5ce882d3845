//! Named environments.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{Distribution, Mdp, ModelError, Pomdp};
use crate::symbol::{symbols, Symbol};

use super::grid::GridSpec;
use super::{EnvError, Environment};

pub const ENVIRONMENT_NAMES: [&str; 5] =
    ["hot_beverage", "officeworld", "confusing_officeworld", "gravity", "thinmaze"];

const OFFICEWORLD: &str = include_str!("../../layouts/officeworld.grid");
const CONFUSING_OFFICEWORLD: &str = include_str!("../../layouts/confusing_officeworld.grid");
const GRAVITY: &str = include_str!("../../layouts/gravity.grid");
const THINMAZE: &str = include_str!("../../layouts/thinmaze.grid");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotBeverageParams {
    pub p_t: f64,
    pub p_cc: f64,
    pub p_tt: f64,
    /// Reward on entering the tea state, which is also the goal.
    pub tea_reward: f64,
    pub max_steps: usize,
}

impl Default for HotBeverageParams {
    fn default() -> Self {
        HotBeverageParams { p_t: 0.1, p_cc: 0.5, p_tt: 0.5, tea_reward: 100.0, max_steps: 20 }
    }
}

/// The vending machine: `s0 init`, `s1 beep`, `s2 beep`, `s3 coffee`,
/// `s4 tea`. Drinks loop back to `s0` under every action.
pub fn hot_beverage_pomdp(p: &HotBeverageParams) -> Result<Pomdp, ModelError> {
    let d = |pairs: &[(usize, f64)]| Distribution::new(pairs.to_vec());
    // actions: coin, button
    let delta = vec![
        vec![d(&[(1, 1.0 - p.p_t), (2, p.p_t)]), d(&[(0, 1.0)])],
        vec![d(&[(1, p.p_cc), (2, 1.0 - p.p_cc)]), d(&[(3, 1.0)])],
        vec![d(&[(1, 1.0 - p.p_tt), (2, p.p_tt)]), d(&[(4, 1.0)])],
        vec![d(&[(0, 1.0)]), d(&[(0, 1.0)])],
        vec![d(&[(0, 1.0)]), d(&[(0, 1.0)])],
    ];
    let mdp = Mdp::new(0, symbols(&["coin", "button"]), delta)?;
    let obs: Vec<Symbol> = symbols(&["init", "beep", "beep", "coffee", "tea"]);
    let reward = vec![0.0, 0.0, 0.0, 0.0, p.tea_reward];
    Pomdp::new(mdp, obs, reward, &BTreeSet::from([4]))
}

pub fn grid_spec(name: &str) -> Option<GridSpec> {
    let text = match name {
        "officeworld" => OFFICEWORLD,
        "confusing_officeworld" => CONFUSING_OFFICEWORLD,
        "gravity" => GRAVITY,
        "thinmaze" => THINMAZE,
        _ => return None,
    };
    Some(GridSpec::parse(text).expect("bundled layout parses"))
}

pub fn grid_environment(spec: &GridSpec, seed: u64) -> Result<Environment, EnvError> {
    let (pomdp, _) = spec.compile()?;
    Environment::new(spec.name.clone(), pomdp, spec.max_steps, seed)
}

pub fn make_environment(name: &str, seed: u64) -> Result<Environment, EnvError> {
    if name == "hot_beverage" {
        let p = HotBeverageParams::default();
        return Environment::new(name, hot_beverage_pomdp(&p)?, p.max_steps, seed);
    }
    let spec = grid_spec(name).ok_or_else(|| EnvError::UnknownEnvironment(name.to_string()))?;
    grid_environment(&spec, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn hot_beverage_starts_at_init() {
        let mut env = make_environment("hot_beverage", 0).unwrap();
        assert_eq!(env.reset(), ("init".into(), 0.0));
        assert_eq!(env.step("coin".into()).unwrap().obs.as_str(), "beep");
    }

    #[test]
    fn officeworld_rooms_have_nine_states() {
        let env = make_environment("officeworld", 0).unwrap();
        let pomdp = env.ground_truth();
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for &o in pomdp.obs_fn() {
            *count.entry(o.as_str()).or_default() += 1;
        }
        for room in ["Room1", "Room2", "Room3", "Room4"] {
            assert_eq!(count[room], 9, "{room}");
        }
        assert_eq!(env.actions(), &symbols(&["up", "down", "left", "right"])[..]);
    }

    #[test]
    fn resets_match_layouts() {
        let first = |name| make_environment(name, 0).unwrap().reset().0;
        assert_eq!(first("officeworld").as_str(), "Room1");
        assert_eq!(first("confusing_officeworld").as_str(), "Room1");
        assert_eq!(first("thinmaze").as_str(), "neutral");
        assert_eq!(first("gravity").as_str(), "neutral");
    }

    #[test]
    fn confusing_rooms_share_labels() {
        let spec = grid_spec("confusing_officeworld").unwrap();
        let label = |c| spec.observation(crate::env::grid::GridState { cell: c, bumped: false, toggled: false });
        assert_eq!(label((4, 1)), label((1, 4)));
        assert_eq!(label((0, 0)), label((4, 4)));
        assert_ne!(label((0, 0)), label((4, 1)));
    }

    #[test]
    fn thinmaze_has_three_observations() {
        let env = make_environment("thinmaze", 0).unwrap();
        let obs: Vec<&str> = env.ground_truth().observations().iter().map(|o| o.as_str()).collect();
        assert_eq!(obs, vec!["cookie", "neutral", "wall"]);
    }

    #[test]
    fn thinmaze_wall_keeps_position() {
        let mut env = make_environment("thinmaze", 0).unwrap();
        env.reset();
        assert_eq!(env.step("up".into()).unwrap().obs.as_str(), "wall");
        assert_eq!(env.step("right".into()).unwrap().obs.as_str(), "neutral");
    }

    #[test]
    fn gravity_is_off_after_toggle() {
        let spec = grid_spec("gravity").unwrap();
        let (pomdp, states) = spec.compile().unwrap();
        for (i, s) in states.iter().enumerate() {
            for a in 0..4 {
                let n = pomdp.mdp().transition(i, a).entries().len();
                if s.toggled {
                    assert_eq!(n, 1);
                }
            }
        }
        let mid = states.iter().position(|s| s.cell == (0, 5) && !s.toggled).unwrap();
        let up = pomdp.mdp().action_index("up".into()).unwrap();
        let succ = pomdp.mdp().transition(mid, up);
        let down_cell = states.iter().position(|s| s.cell == (0, 6) && !s.toggled).unwrap();
        assert!((succ.prob(down_cell) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert_eq!(make_environment("mars", 0).unwrap_err(), EnvError::UnknownEnvironment("mars".into()));
    }
}
