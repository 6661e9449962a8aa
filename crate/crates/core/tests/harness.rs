mod common;

use std::str::FromStr;

use lowswitch::envs::EnvSource;
use lowswitch::hard_instances::HardInstanceSpec;
use lowswitch::harness::{
    aggregate_csv, load_summary, run_experiment, sweep, validate_env, write_hard_instance, write_sweep, RunConfig, SweepGrid,
    SweepSpec, AGGREGATE_FILE, KERNELS_FILE, SUMMARY_FILE, TIMINGS_FILE, TRACE_FILE, TRACE_HEADER,
};
use lowswitch::mdp::TabularMdp;
use lowswitch::policy_space::PolicyShape;
use lowswitch::Algorithm;

fn env() -> EnvSource {
    EnvSource::from_str("random(2,2,3,1)").unwrap()
}

#[test]
fn summary_regret_recomputes_from_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = env().load().unwrap();
    let reward = mdp.reward_function();
    let shape = PolicyShape::of(&mdp);
    let (_, v_star) = common::brute_force_best(&reward, &mdp);
    for algorithm in Algorithm::ALL {
        for mixture in [false, true] {
            let mut c = RunConfig::new(algorithm, env(), 3000);
            c.mixture = mixture;
            c.c_const = 0.01;
            let out = dir.path().join(format!("{algorithm}-{mixture}"));
            run_experiment(&c, &out).unwrap();
            let summary = load_summary(&out.join(SUMMARY_FILE)).unwrap();
            assert_eq!(summary.config, c);
            assert_eq!(summary.config_hash, c.hash());

            let mut reader = csv::Reader::from_path(out.join(TRACE_FILE)).unwrap();
            assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), TRACE_HEADER);
            let mut regret = 0.0;
            let mut rows = 0;
            for row in reader.records() {
                let row = row.unwrap();
                let id = &row[3];
                let value = match summary.mixtures.get(id) {
                    Some(members) => {
                        members.iter().map(|&i| common::forward_value(&shape.decode(i).unwrap(), &reward, &mdp)).sum::<f64>()
                            / members.len() as f64
                    }
                    None => common::forward_value(&shape.decode(id.parse().unwrap()).unwrap(), &reward, &mdp),
                };
                let written: f64 = row[4].parse().unwrap();
                assert!((written - value).abs() < 1e-12);
                regret += v_star - value;
                rows += 1;
            }
            assert_eq!(rows, 3000);
            assert!((regret - summary.total_regret).abs() < 1e-8 * (1.0 + regret), "{algorithm}");
            assert!(!out.join(KERNELS_FILE).exists());
        }
    }
}

#[test]
fn kernels_are_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(Algorithm::Apeve, env(), 1024);
    c.dump_kernels = true;
    run_experiment(&c, dir.path()).unwrap();
    let kernels: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(KERNELS_FILE)).unwrap()).unwrap();
    assert_eq!(kernels.as_array().unwrap().len(), 3);
}

#[test]
fn config_round_trips_and_rejects_unknown_fields() {
    let c = RunConfig::new(Algorithm::ApevePlus, env(), 4096);
    let json = serde_json::to_string(&c).unwrap();
    let back: RunConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.hash(), c.hash());
    let mut other = c.clone();
    other.seed = 1;
    assert_ne!(other.hash(), c.hash());
    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["surprise"] = 1.into();
    assert!(serde_json::from_value::<RunConfig>(v).is_err());
}

#[test]
fn sweep_output_is_independent_of_parallelism() {
    let grid = SweepGrid {
        algorithms: Algorithm::ALL.to_vec(),
        envs: vec![env(), EnvSource::from_str("chain(3,3)").unwrap()],
        episodes: vec![1024, 2048],
        seeds: vec![0, 1],
        delta: 0.1,
        c_const: 0.1,
        mixture: false,
    };
    let configs = SweepSpec::Grid(grid).configs();
    assert_eq!(configs.len(), 32);
    let one = sweep(&configs, 1);
    let eight = sweep(&configs, 8);
    assert_eq!(aggregate_csv(&one).unwrap(), aggregate_csv(&eight).unwrap());

    let dir = tempfile::tempdir().unwrap();
    write_sweep(&eight, dir.path()).unwrap();
    assert!(dir.path().join(AGGREGATE_FILE).exists() && dir.path().join(TIMINGS_FILE).exists());
}

#[test]
fn failed_configs_are_reported_per_row() {
    let good = RunConfig::new(Algorithm::Larfe, env(), 1000);
    let bad = RunConfig::new(Algorithm::ExploreFirst, env(), 40);
    let rows = sweep(&[good, bad], 2);
    assert!(rows[0].outcome.is_ok());
    assert!(rows[1].outcome.is_err());
    let text = String::from_utf8(aggregate_csv(&rows).unwrap()).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn mean_regret_grows_with_the_budget() {
    for algorithm in Algorithm::ALL {
        let mut last = 0.0;
        for k in [1024u64, 4096, 16384] {
            let mut total = 0.0;
            for seed in 0..3 {
                let mut c = RunConfig::new(algorithm, env(), k);
                c.seed = seed;
                total += lowswitch::harness::execute(&c).unwrap().summary.total_regret;
            }
            assert!(total > last, "{algorithm} at K = {k}");
            last = total;
        }
    }
}

#[test]
fn hard_instance_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let spec = HardInstanceSpec::problem_k(3, 2, 4, 2).unwrap();
    let (mdp_path, arms_path) = write_hard_instance(&spec, dir.path()).unwrap();
    let loaded = TabularMdp::load(&mdp_path).unwrap();
    assert_eq!(loaded, spec.build().unwrap());
    let arms: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(arms_path).unwrap()).unwrap();
    assert_eq!(arms.as_array().unwrap().len(), spec.arm_count());

    let info = validate_env(&EnvSource::File(mdp_path)).unwrap();
    assert_eq!((info.states, info.actions, info.horizon), (3, 2, 4));
    assert_eq!(info.optimal_value, 1.0);
}

#[test]
fn invalid_configs_are_rejected() {
    for text in ["random(2,2)", "hard(3,2,3,0)", "chain(0,3)"] {
        assert!(EnvSource::from_str(text).and_then(|e| e.load()).is_err(), "{text}");
    }
    let mut c = RunConfig::new(Algorithm::Apeve, env(), 0);
    assert!(c.validate().is_err());
    c.episodes = 1024;
    c.delta = 2.0;
    assert!(c.validate().is_err());
}
