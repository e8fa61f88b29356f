use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use hiergame::dynamics::project_3d;
use hiergame::game::{solve, StrategicState};
use hiergame::planner::{Planner, PlannerConfig};
use hiergame::sim::ScenarioName;
use hiergame::{ModelTag, Player, RewardConfig};
use hiergame_bench::{coarse_3d, hierarchical_config, smooth_table};

fn bench_solve(c: &mut Criterion) {
    let (game, grid, params) = coarse_3d();
    let mut g = c.benchmark_group("solve");
    g.sample_size(10);
    g.bench_function("3d_coarse", |b| {
        b.iter(|| solve(black_box(&game), &grid, &params).unwrap())
    });
    g.finish();
}

fn bench_lookup(c: &mut Criterion) {
    let t3 = smooth_table(ModelTag::ThreeD);
    let t4 = smooth_table(ModelTag::FourD);
    let x = ScenarioName::Overtaking.initial_state();
    let s3 = StrategicState::ThreeD(project_3d(&x));
    let p4 = [-12.3, 4.1, 5.5, 1.7];
    let mut g = c.benchmark_group("lookup");
    g.bench_function("3d_value", |b| {
        b.iter(|| t3.lookup_value(black_box(&s3), 0, Player::Av).unwrap())
    });
    g.bench_function("3d_gradient", |b| {
        b.iter(|| t3.value_gradient(black_box(&s3), 0, Player::Av).unwrap())
    });
    g.bench_function("4d_value", |b| {
        b.iter(|| t4.lookup(black_box(&p4), 0, Player::Human).unwrap())
    });
    g.finish();
}

fn bench_plan(c: &mut Criterion) {
    let x = ScenarioName::HardMerge.initial_state();
    let mut g = c.benchmark_group("plan");
    g.sample_size(20);
    g.bench_function("tactical", |b| {
        b.iter(|| {
            let mut p = Planner::new(PlannerConfig::default(), RewardConfig::default()).unwrap();
            p.plan(black_box(&x)).unwrap()
        })
    });
    let cfg = hierarchical_config(smooth_table(ModelTag::ThreeD));
    g.bench_function("hier3d", |b| {
        b.iter(|| {
            let mut p = Planner::new(cfg.clone(), RewardConfig::default()).unwrap();
            p.plan(black_box(&x)).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, bench_solve, bench_lookup, bench_plan);
criterion_main!(benches);
