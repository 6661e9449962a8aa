//! Run configuration, result files and parameter sweeps.
//!
//! A run writes `trace.csv` (one row per episode), `summary.json` (totals,
//! schedule, stage records, counters and the echoed config) and, on request,
//! `kernels.json` with each stage's infrequent set and kernels. Floats in the
//! CSV files use 17 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{run_algorithm, Algorithm, AlgorithmOptions, ExperimentReport, StageRecord};
use crate::envs::EnvSource;
use crate::error::{Error, Result};
use crate::exploration::Deployment;
use crate::hard_instances::HardInstanceSpec;
use crate::metrics::SwitchCounters;
use crate::parallel::{self, ExecMode};
use crate::policy_space::PolicyShape;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const KERNELS_FILE: &str = "kernels.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

pub const TRACE_HEADER: [&str; 9] =
    ["episode", "stage", "phase", "policy_id", "expected_value", "instant_regret", "cum_regret", "global_switch_cum", "return"];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvSource,
    pub episodes: u64,
    pub delta: f64,
    pub c_const: f64,
    pub seed: u64,
    #[serde(default)]
    pub mixture: bool,
    /// Parallel version-space scans and episode blocks inside the run.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub dump_kernels: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, env: EnvSource, episodes: u64) -> Self {
        let d = AlgorithmOptions::default();
        Self {
            algorithm,
            env,
            episodes,
            delta: d.delta,
            c_const: d.c_const,
            seed: d.seed,
            mixture: false,
            parallel: false,
            dump_kernels: false,
        }
    }

    pub fn options(&self) -> AlgorithmOptions {
        AlgorithmOptions {
            delta: self.delta,
            c_const: self.c_const,
            seed: self.seed,
            mixture: self.mixture,
            exec: if self.parallel { ExecMode::Parallel } else { ExecMode::Sequential },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        let elimination = matches!(self.algorithm, Algorithm::Apeve | Algorithm::ApevePlus);
        if elimination && (self.episodes < 4 || !self.episodes.is_multiple_of(2)) {
            return Err(Error::invalid(format!(
                "{} needs an even episode budget of at least 4, got {}",
                self.algorithm, self.episodes
            )));
        }
        if self.episodes == 0 {
            return Err(Error::invalid("episode budget must be positive"));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization cannot fail");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub config_hash: String,
    pub optimal_value: f64,
    pub total_regret: f64,
    pub switches: SwitchCounters,
    pub stage_count: usize,
    pub schedule: Option<Vec<u64>>,
    pub stages: Vec<StageRecord>,
    pub final_space_size: Option<u64>,
    /// `[h][s]` action table.
    pub learned_policy: Option<Vec<Vec<u32>>>,
    /// Members of each mixture id used in `trace.csv`.
    pub mixtures: BTreeMap<String, Vec<u64>>,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub struct RunOutput {
    pub report: ExperimentReport,
    pub summary: RunSummary,
}

fn policy_label(deployment: &Deployment, id: u32) -> String {
    match deployment {
        Deployment::Deterministic(i) => i.to_string(),
        Deployment::Mixture(_) => format!("mix{id}"),
    }
}

/// Runs `config` in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let env = config.env.load()?;
    let started = Instant::now();
    let report = run_algorithm(config.algorithm, &env, config.episodes, &config.options())?;
    let elapsed = started.elapsed().as_secs_f64();
    let mixtures = report
        .trace
        .deployments()
        .iter()
        .enumerate()
        .filter_map(|(id, d)| match d {
            Deployment::Mixture(m) => Some((policy_label(d, id as u32), m.clone())),
            Deployment::Deterministic(_) => None,
        })
        .collect();
    let summary = RunSummary {
        config: config.clone(),
        config_hash: config.hash(),
        optimal_value: report.optimal_value,
        total_regret: report.total_regret,
        switches: report.switches,
        stage_count: report.stage_count(),
        schedule: report.schedule.as_ref().map(|s| s.stages.clone()),
        stages: report.stages.clone(),
        final_space_size: report.final_space.as_ref().map(|s| s.len()),
        learned_policy: report.learned_policy.as_ref().map(|p| p.to_table()),
        mixtures,
        notes: report.notes.clone(),
        wall_clock_seconds: elapsed,
    };
    Ok(RunOutput { report, summary })
}

/// `trace.csv` contents.
pub fn trace_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| Error::Invariant(format!("writing trace rows: {e}"));
    w.write_record(TRACE_HEADER).map_err(write_err)?;
    let deployments = report.trace.deployments();
    for (k, (r, v)) in report.trace.episodes().iter().zip(&report.episode_values).enumerate() {
        w.write_record([
            (k + 1).to_string(),
            r.stage.to_string(),
            r.phase.to_string(),
            policy_label(&deployments[r.deployment as usize], r.deployment),
            fmt_f64(v.expected_value),
            fmt_f64(v.instant_regret),
            fmt_f64(v.cum_regret),
            v.global_switch_cum.to_string(),
            fmt_f64(r.realized_return),
        ])
        .map_err(write_err)?;
    }
    w.into_inner().map_err(|e| Error::Invariant(format!("flushing trace rows: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs `config` and writes its result files into `out_dir`.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let output = execute(config)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join(TRACE_FILE), &trace_csv(&output.report)?)?;
    let summary = serde_json::to_string_pretty(&output.summary).expect("summary serialization cannot fail");
    write_file(&out_dir.join(SUMMARY_FILE), summary.as_bytes())?;
    if config.dump_kernels {
        let kernels = serde_json::to_string(&output.report.kernels).expect("kernel serialization cannot fail");
        write_file(&out_dir.join(KERNELS_FILE), kernels.as_bytes())?;
    }
    Ok(output)
}

pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { context: path.display().to_string(), source })
}

/// Cartesian grid of run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub algorithms: Vec<Algorithm>,
    pub envs: Vec<EnvSource>,
    pub episodes: Vec<u64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c")]
    pub c_const: f64,
    #[serde(default)]
    pub mixture: bool,
}

fn default_delta() -> f64 {
    AlgorithmOptions::default().delta
}

fn default_c() -> f64 {
    AlgorithmOptions::default().c_const
}

impl SweepGrid {
    /// Configs in `algorithm, env, episodes, seed` order.
    pub fn expand(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for env in &self.envs {
                for &episodes in &self.episodes {
                    for &seed in &self.seeds {
                        out.push(RunConfig {
                            algorithm,
                            env: env.clone(),
                            episodes,
                            delta: self.delta,
                            c_const: self.c_const,
                            seed,
                            mixture: self.mixture,
                            parallel: false,
                            dump_kernels: false,
                        });
                    }
                }
            }
        }
        out
    }
}

/// A sweep file holds either a grid or an explicit list of configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepSpec {
    Grid(SweepGrid),
    List(Vec<RunConfig>),
}

impl SweepSpec {
    pub fn configs(&self) -> Vec<RunConfig> {
        match self {
            SweepSpec::Grid(g) => g.expand(),
            SweepSpec::List(l) => l.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { context: path.display().to_string(), source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: RunConfig,
    pub config_hash: String,
    pub outcome: std::result::Result<RunSummary, String>,
    pub runtime_seconds: f64,
}

/// Runs every config, `parallelism` at a time. Failures are kept per row.
pub fn sweep(configs: &[RunConfig], parallelism: usize) -> Vec<SweepRow> {
    let mode = if parallelism > 1 { ExecMode::Parallel } else { ExecMode::Sequential };
    parallel::with_threads(parallelism, || {
        parallel::map_slice(mode, configs, |config| {
            let started = Instant::now();
            let outcome = execute(config).map(|o| o.summary).map_err(|e| e.to_string());
            SweepRow {
                config: config.clone(),
                config_hash: config.hash(),
                outcome,
                runtime_seconds: started.elapsed().as_secs_f64(),
            }
        })
    })
}

pub const AGGREGATE_HEADER: [&str; 14] = [
    "config_hash",
    "algorithm",
    "env",
    "episodes",
    "seed",
    "delta",
    "c_const",
    "mixture",
    "status",
    "total_regret",
    "global_switches",
    "local_switches",
    "batches",
    "stages",
];

/// `aggregate.csv` contents; independent of timing and parallelism.
pub fn aggregate_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| Error::Invariant(format!("writing aggregate rows: {e}"));
    w.write_record(AGGREGATE_HEADER).map_err(write_err)?;
    for row in rows {
        let c = &row.config;
        let mut record = vec![
            row.config_hash.clone(),
            c.algorithm.to_string(),
            c.env.to_string(),
            c.episodes.to_string(),
            c.seed.to_string(),
            fmt_f64(c.delta),
            fmt_f64(c.c_const),
            c.mixture.to_string(),
        ];
        match &row.outcome {
            Ok(s) => record.extend([
                "ok".to_string(),
                fmt_f64(s.total_regret),
                s.switches.global.to_string(),
                s.switches.local.to_string(),
                s.switches.batches.to_string(),
                s.stage_count.to_string(),
            ]),
            Err(e) => {
                record.push(format!("error: {e}"));
                record.extend(std::iter::repeat_n(String::new(), 5));
            }
        }
        w.write_record(&record).map_err(write_err)?;
    }
    w.into_inner().map_err(|e| Error::Invariant(format!("flushing aggregate rows: {e}")))
}

pub fn timings_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| Error::Invariant(format!("writing timing rows: {e}"));
    w.write_record(["config_hash", "runtime_seconds"]).map_err(write_err)?;
    for row in rows {
        w.write_record([row.config_hash.clone(), fmt_f64(row.runtime_seconds)]).map_err(write_err)?;
    }
    w.into_inner().map_err(|e| Error::Invariant(format!("flushing timing rows: {e}")))
}

pub fn write_sweep(rows: &[SweepRow], out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_file(&out_dir.join(AGGREGATE_FILE), &aggregate_csv(rows)?)?;
    write_file(&out_dir.join(TIMINGS_FILE), &timings_csv(rows)?)
}

/// Facts about a loadable environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvInfo {
    pub source: EnvSource,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    /// `A^(SH)` when within the version-space cap.
    pub policy_count: Option<u64>,
    pub optimal_value: f64,
}

pub fn validate_env(source: &EnvSource) -> Result<EnvInfo> {
    let env = source.load()?;
    let (optimal_value, _) = crate::mdp::optimal_value_and_policy(&env.reward_function(), &env)?;
    Ok(EnvInfo {
        source: source.clone(),
        states: env.num_states(),
        actions: env.num_actions(),
        horizon: env.horizon(),
        initial_state: env.initial_state(),
        policy_count: PolicyShape::of(&env).count().ok(),
        optimal_value,
    })
}

/// Writes `mdp.json` and `arms.json` for a lower-bound instance.
pub fn write_hard_instance(spec: &HardInstanceSpec, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    create_dir(out_dir)?;
    let mdp_path = out_dir.join("mdp.json");
    spec.build()?.save(&mdp_path)?;
    let arms_path = out_dir.join("arms.json");
    let arms = serde_json::to_string_pretty(&spec.manifest()).expect("manifest serialization cannot fail");
    write_file(&arms_path, arms.as_bytes())?;
    Ok((mdp_path, arms_path))
}
