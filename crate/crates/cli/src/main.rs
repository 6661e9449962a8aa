use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lowswitch::algorithms::{ScheduleKind, StageSchedule};
use lowswitch::envs::EnvSource;
use lowswitch::hard_instances::HardInstanceSpec;
use lowswitch::harness::{self, RunConfig, SweepSpec};
use lowswitch::Algorithm;

#[derive(Parser)]
#[command(name = "lowswitch", version, about = "Low-switching-cost tabular RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.json.
    Run(RunArgs),
    /// Run every config of a sweep file and write aggregate.csv and timings.csv.
    Sweep {
        /// JSON grid or list of run configs.
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Configs run concurrently; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the stage lengths T_1..T_K0 for a budget.
    Schedule {
        #[arg(long)]
        episodes: u64,
        /// Round stages to multiples of H*S*A of this environment (default unit 1).
        #[arg(long)]
        env: Option<EnvSource>,
        #[arg(long, default_value = "apeve")]
        algo: Algorithm,
    },
    /// Write a lower-bound instance (mdp.json and arms.json).
    Hardmdp {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        /// Arm that pays 1; without it every arm pays 0.
        #[arg(long)]
        arm: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load an environment and print its shape and optimal value.
    ValidateEnv {
        #[arg(long)]
        env: EnvSource,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; command-line flags are ignored when given.
    #[arg(long, conflicts_with_all = ["algo", "env", "episodes"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    algo: Option<Algorithm>,
    /// chain(S,H), random(S,A,H,seed), hard(S,A,H,k) or a path to an MDP JSON file.
    #[arg(long, required_unless_present = "config")]
    env: Option<EnvSource>,
    #[arg(long, required_unless_present = "config")]
    episodes: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_const: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deploy each exploration batch as one uniform mixture.
    #[arg(long)]
    mixture: bool,
    #[arg(long)]
    parallel: bool,
    /// Also write kernels.json with F, P-int and P-hat per stage.
    #[arg(long)]
    dump_kernels: bool,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let config: RunConfig = serde_json::from_str(&text)
                .map_err(|source| lowswitch::Error::Json { context: path.display().to_string(), source })?;
            return Ok(config);
        }
        // clap guarantees these are present without --config.
        let mut c = RunConfig::new(self.algo.unwrap(), self.env.clone().unwrap(), self.episodes.unwrap());
        c.delta = self.delta;
        c.c_const = self.c_const;
        c.seed = self.seed;
        c.mixture = self.mixture;
        c.parallel = self.parallel;
        c.dump_kernels = self.dump_kernels;
        Ok(c)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let config = args.config()?;
            let out = harness::run_experiment(&config, &args.out)?;
            let s = &out.summary;
            println!(
                "{} {} K={} regret={:.6} global_switches={} local_switches={} batches={} stages={}",
                config.algorithm,
                config.env,
                config.episodes,
                s.total_regret,
                s.switches.global,
                s.switches.local,
                s.switches.batches,
                s.stage_count
            );
        }
        Command::Sweep { spec, out, jobs } => {
            let configs = SweepSpec::load(&spec)?.configs();
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = harness::sweep(&configs, jobs.max(1));
            harness::write_sweep(&rows, &out)?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} configs, {failed} failed", rows.len());
        }
        Command::Schedule { episodes, env, algo } => {
            let kind = match algo {
                Algorithm::Apeve => ScheduleKind::Apeve,
                Algorithm::ApevePlus => ScheduleKind::ApevePlus,
                other => return Err(lowswitch::Error::InvalidArgument(format!("{other} has no stage schedule")).into()),
            };
            let unit = match env {
                Some(source) => {
                    let mdp = source.load()?;
                    (mdp.horizon() * mdp.num_original_states() * mdp.num_actions()) as u64
                }
                None => 1,
            };
            let schedule = StageSchedule::new(kind, episodes, unit)?;
            let text: Vec<String> = schedule.stages.iter().map(u64::to_string).collect();
            println!("{}", text.join(","));
        }
        Command::Hardmdp { states, actions, horizon, arm, out } => {
            let spec = match arm {
                Some(k) => HardInstanceSpec::problem_k(states, actions, horizon, k)?,
                None => HardInstanceSpec::base(states, actions, horizon)?,
            };
            let (mdp, arms) = harness::write_hard_instance(&spec, &out)?;
            println!("{} arms; wrote {} and {}", spec.arm_count(), mdp.display(), arms.display());
        }
        Command::ValidateEnv { env } => {
            let info = harness::validate_env(&env)?;
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<lowswitch::Error>() {
        Some(e) if e.is_config_error() => 2,
        Some(e) if e.is_invariant_violation() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&lowswitch::Error::InvalidArgument("x".into()).into()), 2);
        assert_eq!(exit_code(&lowswitch::Error::BudgetTooSmall { what: "x", needed: 2, got: 1 }.into()), 2);
        assert_eq!(exit_code(&lowswitch::Error::Invariant("x".into()).into()), 3);
        assert_eq!(exit_code(&lowswitch::Error::Precondition("x".into()).into()), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }
}
