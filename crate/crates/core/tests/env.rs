use poql::env::{grid_environment, make_environment, GridSpec, ENVIRONMENT_NAMES};

const CORRIDOR: &str = "\
name corridor
observe bumps
max_steps 10
layout
S .|. G
end
";

#[test]
fn wall_blocks_corridor() {
    let spec = GridSpec::parse(CORRIDOR).unwrap();
    let mut env = grid_environment(&spec, 0).unwrap();
    env.reset();
    assert_eq!(env.step("right".into()).unwrap().obs.as_str(), "neutral");
    let out = env.step("right".into()).unwrap();
    assert_eq!(out.obs.as_str(), "wall");
    assert!(!out.done);
    assert_eq!(env.oracle_steps(0.99), None);
}

#[test]
fn episodes_end_at_horizon() {
    let spec = GridSpec::parse(CORRIDOR).unwrap();
    let mut env = grid_environment(&spec, 0).unwrap();
    env.reset();
    let mut steps = 0;
    loop {
        steps += 1;
        if env.step("left".into()).unwrap().done {
            break;
        }
    }
    assert_eq!(steps, 10);
    assert!(env.step("left".into()).is_err());
}

#[test]
fn every_named_environment_has_a_solution() {
    for name in ENVIRONMENT_NAMES.iter().filter(|&&n| n != "hot_beverage") {
        let env = make_environment(name, 0).unwrap();
        let oracle = env.oracle_steps(0.99).unwrap_or_else(|| panic!("{name}"));
        assert!(oracle < env.max_steps(), "{name}");
    }
}

#[test]
fn forks_replay_the_same_episode() {
    let env = make_environment("gravity", 0).unwrap();
    let run = |seed| {
        let mut e = env.fork(seed);
        (0..30).map(|_| e.step("up".into()).map(|o| o.obs).ok()).collect::<Vec<_>>()
    };
    assert_eq!(run(3), run(3));
}

#[test]
fn malformed_layout_reports_line() {
    let err = GridSpec::parse("observe rooms\nlayout\nS X G\nend\n").unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}
