use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use poql::agent::{evaluate_with, RandomPolicy};
use poql::env::{make_environment, GridSpec};
use poql::exec::Execution;
use poql::value::value_iteration_with;

fn strategies() -> Vec<(&'static str, Execution)> {
    #[allow(unused_mut)]
    let mut s = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    s.push(("parallel", Execution::Parallel));
    s
}

/// Open `n x n` field with slip everywhere.
fn open_field(n: usize) -> GridSpec {
    let mut text = String::from("observe rooms\nlayout\n");
    for y in 0..n {
        let row: Vec<&str> = (0..n)
            .map(|x| match (x, y) {
                (0, 0) => "S",
                (x, y) if x == n - 1 && y == n - 1 => "G",
                _ => ".",
            })
            .collect();
        text.push_str(&row.join(" "));
        text.push_str("\n\n");
    }
    text.push_str("end\nslip\n");
    for _ in 0..n {
        text.push_str(&"2".repeat(n));
        text.push('\n');
    }
    text.push_str("end\n");
    GridSpec::parse(&text).unwrap()
}

fn bench_evaluate(c: &mut Criterion) {
    let env = make_environment("gravity", 0).unwrap();
    let policy = RandomPolicy { n_actions: 4 };
    let mut group = c.benchmark_group("evaluate_gravity_500");
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_with(&policy, &env, 500, 7, 0.99, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_value_iteration(c: &mut Criterion) {
    let (pomdp, _) = open_field(80).compile().unwrap();
    let mut group = c.benchmark_group("value_iteration_80x80");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| value_iteration_with(pomdp.mdp(), pomdp.rewards(), pomdp.goal_mask(), 0.95, 1e-6, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_value_iteration);
criterion_main!(benches);
