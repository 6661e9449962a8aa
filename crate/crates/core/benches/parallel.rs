use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lowswitch::envs::random_mdp;
use lowswitch::exploration::{ExplorationContext, Phase};
use lowswitch::parallel::ExecMode;
use lowswitch::policy_space::{DeterministicPolicy, PolicyShape, VersionSpace};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn evaluate_members(c: &mut Criterion) {
    // 2^16 policies.
    let env = random_mdp(4, 2, 4, 1).unwrap();
    let space = VersionSpace::full(PolicyShape::of(&env)).unwrap();
    let reward = env.reward_function();
    let mut group = c.benchmark_group("evaluate_members");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| space.evaluate_members(&reward, &env, mode).unwrap())
        });
    }
    group.finish();
}

fn deploy_block(c: &mut Criterion) {
    let env = random_mdp(5, 3, 10, 2).unwrap();
    let policy = DeterministicPolicy::constant(10, 5, 3, 1).unwrap();
    let mut group = c.benchmark_group("deploy_block");
    group.sample_size(10);
    for (name, exec) in MODES {
        let ctx = ExplorationContext { exec, ..ExplorationContext::new(&env, 0, 1) };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ctx.deploy(Phase::Fine, 0, 100_000, std::slice::from_ref(&policy)))
        });
    }
    group.finish();
}

criterion_group!(benches, evaluate_members, deploy_block);
criterion_main!(benches);
