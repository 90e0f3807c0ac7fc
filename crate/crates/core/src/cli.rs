//! Command-line front end: `enumerate`, `train`, `eval` and `replay`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error,
//! 4 missing or corrupt checkpoint, 5 numerical abort.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::RunConfig;
use crate::drl::{train, Algo, CheckpointPolicy, HighwayTrainEnv, TrainError};
use crate::env::Policy;
use crate::eval::{
    emit_deterministic, emit_stochastic, eval_env_config, run_deterministic_par, run_episode_observed,
    run_stochastic_par, EpisodeRecord, ReportFormat,
};
use crate::mobil::MobilPolicy;
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, NnError};
use crate::scenarios::{enumerate_deterministic, gen_stochastic_test, instantiate_on, ScenarioClass};

/// Scenario counts per class of the deterministic suite.
pub const CLASS_COUNTS: [(ScenarioClass, usize); 5] = [
    (ScenarioClass::A, 10),
    (ScenarioClass::B, 30),
    (ScenarioClass::C, 231),
    (ScenarioClass::D, 126),
    (ScenarioClass::E, 25),
];

pub const SCENARIO_FILE: &str = "deterministic_scenarios.jsonl";

#[derive(Debug, Parser)]
#[command(name = "lanebench", version, about = "Highway lane-change benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed, the stochastic base seed or the replay seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; overrides `out_dir` from the configuration.
    #[arg(long, global = true, env = "LANEBENCH_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write the deterministic scenario suite.
    Enumerate,
    /// Train an agent on random traffic.
    Train {
        /// Overrides `algo` from the configuration.
        #[arg(long)]
        algo: Option<Algo>,
        /// Overrides `train.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate MOBIL or a checkpoint on a test suite.
    Eval {
        /// `mobil` or a checkpoint path.
        #[arg(long, default_value = "mobil")]
        policy: String,
        #[arg(long, value_enum, default_value_t = Suite::Deterministic)]
        suite: Suite,
        /// Overrides `eval.stochastic_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run one episode and dump every observation as a PNG frame.
    Replay {
        /// `mobil` or a checkpoint path.
        #[arg(long, default_value = "mobil")]
        policy: String,
        /// Deterministic scenario id; otherwise a stochastic episode on `--seed`.
        #[arg(long)]
        scenario: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Stochastic,
    Deterministic,
}

impl clap::ValueEnum for Algo {
    fn value_variants<'a>() -> &'a [Self] {
        &Algo::ALL
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            TrainError::NonFinite(d) => CliError::Numerical(serde_json::to_string(&d).expect("diagnostic serializes")),
            TrainError::Nn(NnError::NonFinite(m)) => CliError::Numerical(m),
            TrainError::Nn(e) => CliError::Config(e.to_string()),
        }
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.eval.base_seed = seed;
    }
    Ok(cfg)
}

/// Either MOBIL or a greedy checkpoint policy.
#[derive(Debug, Clone)]
pub enum AnyPolicy {
    Mobil(MobilPolicy),
    Checkpoint(CheckpointPolicy),
}

impl AnyPolicy {
    pub fn load(spec: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        if spec.eq_ignore_ascii_case("mobil") {
            return Ok(AnyPolicy::Mobil(MobilPolicy::new(cfg.mobil)));
        }
        let path = Path::new(spec);
        let ckpt = load_checkpoint(path).map_err(|e| match e {
            NnError::Io(e) => io_err(path, e),
            other => CliError::Checkpoint(format!("{}: {other}", path.display())),
        })?;
        let label = ckpt.meta.get("algo").map(|a| a.to_uppercase()).unwrap_or_else(|| "Checkpoint".into());
        CheckpointPolicy::new(label, ckpt.network)
            .map(AnyPolicy::Checkpoint)
            .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))
    }

    fn slug(&self) -> String {
        self.name().to_lowercase()
    }
}

impl Policy for AnyPolicy {
    fn name(&self) -> String {
        match self {
            AnyPolicy::Mobil(p) => p.name(),
            AnyPolicy::Checkpoint(p) => p.name(),
        }
    }

    fn act(&mut self, scene: &crate::scenarios::Scene, obs: &crate::env::Observation) -> crate::env::Action {
        match self {
            AnyPolicy::Mobil(p) => p.act(scene, obs),
            AnyPolicy::Checkpoint(p) => p.act(scene, obs),
        }
    }

    fn wants_rule_mask(&self) -> bool {
        match self {
            AnyPolicy::Mobil(p) => p.wants_rule_mask(),
            AnyPolicy::Checkpoint(p) => p.wants_rule_mask(),
        }
    }
}

/// Writes the suite to `dir`; returns the file path.
pub fn cmd_enumerate(dir: &Path) -> Result<PathBuf, CliError> {
    let set = enumerate_deterministic();
    for (class, n) in CLASS_COUNTS {
        if set.count(class) != n {
            return Err(CliError::Config(format!("class {class:?} has {} scenarios, expected {n}", set.count(class))));
        }
    }
    create_dir(dir)?;
    let path = dir.join(SCENARIO_FILE);
    write(&path, set.to_jsonl())?;
    Ok(path)
}

/// Trains `cfg.algo`; returns the run directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let dir = cfg.out_dir.join(format!("train-{}-seed{}", cfg.algo, cfg.train.seed));
    create_dir(&dir)?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    let traffic = cfg.traffic.clone();
    let env = cfg.env;
    let outcome = train(cfg.algo, |_| HighwayTrainEnv::new(traffic.clone(), env), &cfg.train)?;
    write(&dir.join("curve.tsv"), outcome.curve.to_table())?;
    for (i, (step, net)) in outcome.checkpoints.iter().enumerate() {
        let mut meta = BTreeMap::new();
        meta.insert("algo".to_string(), cfg.algo.name().to_string());
        meta.insert("seed".to_string(), cfg.train.seed.to_string());
        meta.insert("step".to_string(), step.to_string());
        let ckpt = Checkpoint {
            network: net.clone(),
            meta,
        };
        let name = if i + 1 == outcome.checkpoints.len() {
            "final.ckpt".to_string()
        } else {
            format!("step-{step:08}.ckpt")
        };
        let path = dir.join(name);
        save_checkpoint(&path, &ckpt).map_err(|e| io_err(&path, e))?;
    }
    Ok(dir)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn write_records(path: &Path, records: &[EpisodeRecord]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    write(path, text)
}

/// Evaluates `policy` on `suite`; writes plain, CSV and Markdown reports
/// plus per-episode records. Returns the run directory.
pub fn cmd_eval(cfg: &RunConfig, policy: &AnyPolicy, suite: Suite, jobs: usize) -> Result<PathBuf, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let pool = thread_pool(jobs)?;
    let agent = policy.name();
    let (dir, reports, records) = match suite {
        Suite::Stochastic => {
            let (report, records) = pool
                .install(|| run_stochastic_par(policy, &cfg.eval, &cfg.env))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let dir = cfg.out_dir.join(format!("eval-{}-stochastic-seed{}", policy.slug(), cfg.eval.base_seed));
            let reports: Vec<_> = [ReportFormat::Plain, ReportFormat::Csv, ReportFormat::Markdown]
                .into_iter()
                .map(|f| (f, emit_stochastic(&agent, &report, f)))
                .collect();
            (dir, reports, records)
        }
        Suite::Deterministic => {
            let set = enumerate_deterministic();
            let (report, records) = pool
                .install(|| run_deterministic_par(policy, &set, &cfg.eval, &cfg.env))
                .map_err(|e| CliError::Config(e.to_string()))?;
            let dir = cfg.out_dir.join(format!("eval-{}-deterministic", policy.slug()));
            let reports: Vec<_> = [ReportFormat::Plain, ReportFormat::Csv, ReportFormat::Markdown]
                .into_iter()
                .map(|f| (f, emit_deterministic(&agent, &report, f)))
                .collect();
            (dir, reports, records)
        }
    };
    create_dir(&dir)?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    for (f, text) in &reports {
        write(&dir.join(format!("report.{}", f.extension())), text)?;
    }
    write_records(&dir.join("episodes.jsonl"), &records)?;
    Ok(dir)
}

/// Replays one episode, saving the observation shown at every decision
/// as `frame-NNNN.png` and the decisions as `episode.jsonl`.
pub fn cmd_replay(cfg: &RunConfig, policy: &AnyPolicy, scenario: Option<u32>, seed: u64) -> Result<PathBuf, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    let (scene, key, name, timeout) = match scenario {
        Some(id) => {
            let set = enumerate_deterministic();
            let scn = set.get(id).ok_or_else(|| CliError::Config(format!("unknown scenario {id}")))?;
            let scene =
                instantiate_on(scn, cfg.eval.deterministic_segment_length).map_err(|e| CliError::Config(e.to_string()))?;
            (scene, id as u64, format!("scenario{id:03}"), cfg.eval.deterministic_horizon)
        }
        None => {
            let scene = gen_stochastic_test(seed, &cfg.eval.stochastic).map_err(|e| CliError::Config(e.to_string()))?;
            (scene, seed, format!("seed{seed}"), cfg.env.timeout)
        }
    };
    let dir = cfg.out_dir.join(format!("replay-{}-{name}", policy.slug()));
    create_dir(&dir)?;
    write(&dir.join("config.toml"), cfg.to_toml())?;
    let env_cfg = eval_env_config(policy, &cfg.env, timeout);
    let mut log = String::new();
    let mut failure = None;
    let mut p = policy.clone();
    let record = run_episode_observed(&mut p, scene, key, key, env_cfg, &mut |obs, rec| {
        let path = dir.join(format!("frame-{:04}.png", rec.step));
        if let Err(e) = obs.save_png(&path) {
            failure.get_or_insert_with(|| io_err(&path, e));
        }
        log.push_str(&serde_json::to_string(rec).expect("record serializes"));
        log.push('\n');
    });
    if let Some(e) = failure {
        return Err(e);
    }
    write(&dir.join("episode.jsonl"), log)?;
    write(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;
    Ok(dir)
}

pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let mut cfg = effective_config(&cli.common)?;
    match cli.command {
        Command::Enumerate => cmd_enumerate(&cfg.out_dir),
        Command::Train { algo, steps } => {
            if let Some(a) = algo {
                cfg.algo = a;
            }
            if let Some(s) = steps {
                cfg.train.total_steps = s;
            }
            cmd_train(&cfg)
        }
        Command::Eval { policy, suite, episodes } => {
            if let Some(n) = episodes {
                cfg.eval.stochastic_episodes = n;
            }
            let p = AnyPolicy::load(&policy, &cfg)?;
            cmd_eval(&cfg, &p, suite, cli.common.jobs)
        }
        Command::Replay { policy, scenario } => {
            let p = AnyPolicy::load(&policy, &cfg)?;
            cmd_replay(&cfg, &p, scenario, cli.common.seed.unwrap_or(cfg.eval.base_seed))
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(path) => {
            let _ = writeln!(std::io::stdout(), "{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
