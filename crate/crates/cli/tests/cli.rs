use std::path::Path;
use std::process::{Command, Output};

fn lowswitch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowswitch")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn schedule_prints_stage_lengths() {
    let out = lowswitch(&["schedule", "--episodes", "256"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "16,64,48");
    let out = lowswitch(&["schedule", "--episodes", "4096", "--env", "random(2,2,3,1)", "--algo", "apeve-plus"]);
    assert_eq!(stdout(&out).trim(), "60,504,1440,1528");
    assert_eq!(lowswitch(&["schedule", "--episodes", "255"]).status.code(), Some(2));
    assert_eq!(lowswitch(&["schedule", "--episodes", "256", "--algo", "larfe"]).status.code(), Some(2));
}

#[test]
fn run_writes_results_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["run", "--algo", "apeve", "--env", "random(2,2,3,1)", "--episodes", "2048", "--seed", "3"];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", out_dir.to_str().unwrap()]);
        let out = lowswitch(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", &[]);
    let b = run("b", &["--parallel"]);
    let c = run("c", &["--dump-kernels"]);
    let trace = |d: &Path| std::fs::read(d.join("trace.csv")).unwrap();
    assert_eq!(trace(&a), trace(&b));
    assert_eq!(trace(&a), trace(&c));
    assert!(c.join("kernels.json").exists() && !a.join("kernels.json").exists());

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["episodes"], 2048);
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, summary["config"].to_string()).unwrap();
    let d = dir.path().join("d");
    let out = lowswitch(&["run", "--config", config_path.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(trace(&a), trace(&d));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--algo", "apeve", "--env", "random(2,2)", "--episodes", "64", "--out", out],
        vec!["run", "--algo", "bogus", "--env", "chain(2,2)", "--episodes", "64", "--out", out],
        vec!["run", "--algo", "apeve", "--env", "chain(2,2)", "--episodes", "3", "--out", out],
        vec!["run", "--algo", "explore-first", "--env", "chain(2,2)", "--episodes", "20", "--out", out],
        vec!["run", "--algo", "apeve", "--env", "chain(2,2)", "--episodes", "64", "--delta", "0", "--out", out],
        vec!["validate-env", "--env", "hard(3,2,3,0)"],
        vec!["hardmdp", "--states", "3", "--actions", "2", "--horizon", "4", "--arm", "6", "--out", out],
    ] {
        assert_eq!(lowswitch(&args).status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"algorithm\": \"apeve\"}").unwrap();
    assert_eq!(lowswitch(&["run", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
}

#[test]
fn sweep_and_hardmdp_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("sweep.json");
    std::fs::write(
        &spec,
        r#"{"algorithms": ["apeve", "larfe"], "envs": ["random(2,2,2,0)"], "episodes": [512, 1024], "seeds": [0, 1]}"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    let status = lowswitch(&["sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let aggregate = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate.lines().count(), 9);

    let hard = dir.path().join("hard");
    let out = lowswitch(&[
        "hardmdp",
        "--states",
        "3",
        "--actions",
        "2",
        "--horizon",
        "4",
        "--arm",
        "2",
        "--out",
        hard.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let info = lowswitch(&["validate-env", "--env", hard.join("mdp.json").to_str().unwrap()]);
    let info: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(info["optimal_value"], 1.0);
}
