//! Command-line surface: flag parsing, config resolution, the five
//! commands, and exit-code mapping.
//!
//! Every command resolves its full configuration and finishes computing
//! before the first output file is created, so a rejected config never
//! leaves partial artifacts behind. Exit codes: 0 success, 1 usage or
//! config error, 2 runtime failure.

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;

use jamlure_core::drl::actor_learner_loop;
use jamlure_core::env::ActionSet;
use jamlure_core::plan::{
    Metrics, Policy, bellman_residuals, evaluate_policy, q_learning, value_iteration,
};
use jamlure_core::strategy::{StrategyKind, TrainerSpec, build_strategy};

use crate::config::{
    ConfigFileError, RunConfig, TrainerKind, load_config, resolve_output_dir,
};
use crate::formats;
use crate::sweep::{SweepError, SweepSpec, SweptParameter, run_sweep, summarize};

#[derive(Debug, Parser)]
#[command(
    name = "jamlure",
    version,
    about = "Simulator and policy toolkit for an energy-harvesting transmitter \
             that can lure a reactive jammer into wasteful attacks"
)]
pub struct Cli {
    /// TOML configuration file. Omitting it runs the documented defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory receiving all output files.
    #[arg(long, global = true, env = "JAMLURE_OUT_DIR", value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Worker thread cap for parallel evaluation and sweeps.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<NonZeroUsize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the planning problem exactly and write table, policy, and
    /// residual files.
    Oracle,
    /// Train a learner, then write its policy, training log, and (for dqn)
    /// weight snapshot.
    Train {
        /// Learning algorithm; overrides the config file's trainer kind.
        #[arg(long, value_enum)]
        trainer: Option<TrainerArg>,
        /// Training interaction budget; overrides the config file.
        #[arg(long)]
        steps: Option<u64>,
        /// Trainer seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a policy over seeded simulation runs.
    Evaluate {
        /// Stored policy file to evaluate instead of building a strategy.
        #[arg(long, value_name = "PATH", conflicts_with = "strategy")]
        policy: Option<PathBuf>,
        /// Strategy to build and evaluate: proposed, dh, db, or wd.
        #[arg(long, value_name = "CODE")]
        strategy: Option<String>,
        /// Slots per evaluation seed; overrides the config file.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Sweep a probability across strategies and write the result table.
    Sweep {
        /// Preset layout: sweep the attack probability, or the arrival
        /// probability with the attack probability pinned at 0.6.
        #[arg(long, value_enum)]
        figure: Option<FigureArg>,
    },
    /// Write the enumerated transition kernel as delimited text.
    KernelDump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainerArg {
    Tabular,
    Dqn,
}

impl TrainerArg {
    fn kind(self) -> TrainerKind {
        match self {
            TrainerArg::Tabular => TrainerKind::Tabular,
            TrainerArg::Dqn => TrainerKind::Dqn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureArg {
    /// Attack probability 0.1 to 0.9.
    Jamming,
    /// Arrival probability 0.1 to 0.9 at attack probability 0.6.
    Arrival,
}

impl FigureArg {
    fn name(self) -> &'static str {
        match self {
            FigureArg::Jamming => "jamming",
            FigureArg::Arrival => "arrival",
        }
    }
}

/// Failure carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad usage or configuration; exits 1.
    #[error("{0}")]
    Config(String),
    /// Failure while executing a valid request; exits 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<jamlure_core::env::ConfigError> for CliError {
    fn from(e: jamlure_core::env::ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Parses the process arguments and runs the command. Returns the exit
/// code instead of exiting, so the binary stays a one-liner.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.get())
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    let out_dir = resolve_output_dir(cli.output_dir.clone(), &config);
    match cli.command {
        Command::Oracle => cmd_oracle(config, &out_dir),
        Command::Train { trainer, steps, seed } => {
            cmd_train(config, &out_dir, trainer, steps, seed)
        }
        Command::Evaluate { policy, strategy, horizon } => {
            cmd_evaluate(config, &out_dir, policy.as_deref(), strategy.as_deref(), horizon)
        }
        Command::Sweep { figure } => cmd_sweep(config, &out_dir, figure),
        Command::KernelDump => cmd_kernel_dump(config, &out_dir),
    }
}

/// Buffered output files, committed to disk only after a command computed
/// everything it wanted to write.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| CliError::Runtime(format!("building {name}: {e}")))?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn add_manifest(&mut self, manifest: &formats::Manifest) {
        let name = format!("{}.manifest.toml", manifest.command);
        self.files.push((name, manifest.to_toml().into_bytes()));
    }

    fn commit(self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Discount and tolerance for exact planning, from the trainer section's
/// shared keys.
fn exact_params(config: &RunConfig) -> Result<(f64, f64), CliError> {
    let gamma = config.trainer.gamma.unwrap_or(0.99);
    if !(0.0..1.0).contains(&gamma) {
        return Err(CliError::Config(format!("trainer.gamma {gamma} outside [0, 1)")));
    }
    let tol = config.trainer.tol.unwrap_or(1e-9);
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("trainer.tol {tol} must be positive")));
    }
    Ok((gamma, tol))
}

fn cmd_oracle(config: RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let env = config.env.to_env_config()?;
    let (gamma, tol) = exact_params(&config)?;
    let out = value_iteration(&env, gamma, tol);
    let residuals = bellman_residuals(&out.q, &env, gamma);
    let worst = residuals.iter().map(|&(_, _, r)| r).fold(0.0f64, f64::max);

    let mut files = Outputs::new();
    files.add("qtable.csv", |w| formats::write_qtable_csv(w, &out.q, &env))?;
    files.add("policy.csv", |w| formats::write_policy_csv(w, &out.policy, &env))?;
    files.add("residuals.csv", |w| formats::write_residuals_csv(w, &residuals))?;
    files.add_manifest(&formats::Manifest::new("oracle", &config));
    files.commit(out_dir)?;

    println!(
        "value iteration converged after {} backups (gamma {gamma}, tol {tol})",
        out.iterations
    );
    println!(
        "worst rechecked residual {worst:.3e} over {} feasible pairs",
        residuals.len()
    );
    println!("policy covers {} states", env.state_count());
    Ok(())
}

fn cmd_train(
    mut config: RunConfig,
    out_dir: &Path,
    trainer: Option<TrainerArg>,
    steps: Option<u64>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    if let Some(arg) = trainer {
        config.trainer.kind = arg.kind();
    }
    if let Some(steps) = steps {
        config.trainer.steps = Some(steps);
    }
    if let Some(seed) = seed {
        config.trainer.seed = Some(seed);
    }
    if config.trainer.kind == TrainerKind::Vi {
        return Err(CliError::Config(
            "trainer 'vi' is exact planning, not training; run the oracle command \
             or pass --trainer tabular|dqn"
                .into(),
        ));
    }
    let env = config.env.to_env_config()?;
    let spec = config.trainer.to_spec()?;
    config.evaluation.check()?;
    let horizon = config.evaluation.horizon;
    let seeds = config.evaluation.seeds.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(config.trainer.trainer_seed());

    let mut manifest = formats::Manifest::new("train", &config);
    manifest.trainer = Some(config.trainer.kind.code().to_string());
    let mut files = Outputs::new();
    let metrics: Metrics;
    match spec {
        TrainerSpec::Tabular(hp) => {
            let reference = value_iteration(&env, hp.gamma, 1e-9);
            let (q, log) = q_learning(&env, &hp, &mut rng, Some(&reference.q));
            let policy = Policy::greedy_from(&q, &env);
            metrics = evaluate_policy(&env, &policy, horizon, &seeds);
            files.add("tabular-qtable.csv", |w| formats::write_qtable_csv(w, &q, &env))?;
            files.add("tabular-policy.csv", |w| {
                formats::write_policy_csv(w, &policy, &env)
            })?;
            files.add("tabular-log.csv", |w| formats::write_tabular_log_csv(w, &log))?;
            if let Some(last) = log.last() {
                if let Some(d) = last.oracle_distance {
                    println!("final distance to the exact table: {d:.6}");
                }
            }
        }
        TrainerSpec::Dqn(hp) => {
            let (net, log) = actor_learner_loop(&env, &hp, &mut rng);
            let policy =
                jamlure_core::drl::greedy_policy_from_net(&net, &env, ActionSet::all());
            metrics = evaluate_policy(&env, &policy, horizon, &seeds);
            files.add("dqn-weights.bin", |w| {
                use std::io::Write as _;
                w.write_all(&net.to_bytes())
            })?;
            files.add("dqn-policy.csv", |w| formats::write_policy_csv(w, &policy, &env))?;
            files.add("dqn-log.csv", |w| formats::write_training_log_csv(w, &log))?;
        }
        TrainerSpec::ValueIteration { .. } => unreachable!("vi kind rejected above"),
    }
    files.add("evaluation.csv", |w| {
        formats::write_evaluation_csv(w, &metrics.per_seed)
    })?;
    files.add_manifest(&manifest);
    files.commit(out_dir)?;

    println!(
        "final evaluated throughput {:.6} packets/slot ({} seeds x {} slots)",
        metrics.avg_throughput,
        seeds.len(),
        horizon
    );
    Ok(())
}

fn cmd_evaluate(
    config: RunConfig,
    out_dir: &Path,
    policy_path: Option<&Path>,
    strategy: Option<&str>,
    horizon_flag: Option<u64>,
) -> Result<(), CliError> {
    let env = config.env.to_env_config()?;
    config.evaluation.check()?;
    let horizon = horizon_flag.unwrap_or(config.evaluation.horizon);
    if horizon == 0 {
        return Err(CliError::Config("--horizon must be at least 1".into()));
    }
    let seeds = config.evaluation.seeds.clone();

    let (policy, source) = match policy_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            let policy = formats::parse_policy_csv(&text, &env).map_err(|e| {
                CliError::Config(format!("policy {}: {e}", path.display()))
            })?;
            (policy, format!("file:{}", path.display()))
        }
        None => {
            let kind = match strategy {
                Some(code) => StrategyKind::from_code(code).ok_or_else(|| {
                    CliError::Config(format!("unknown strategy {code:?}"))
                })?,
                None => StrategyKind::Proposed,
            };
            let trainer = config.trainer.to_spec()?;
            let mut rng = ChaCha12Rng::seed_from_u64(config.trainer.trainer_seed());
            (build_strategy(kind, &env, &trainer, &mut rng), kind.code().to_string())
        }
    };
    let metrics = evaluate_policy(&env, &policy, horizon, &seeds);

    let mut manifest = formats::Manifest::new("evaluate", &config);
    manifest.strategy = Some(source.clone());
    let mut files = Outputs::new();
    files.add("evaluation.csv", |w| {
        formats::write_evaluation_csv(w, &metrics.per_seed)
    })?;
    files.add_manifest(&manifest);
    files.commit(out_dir)?;

    println!(
        "{source}: throughput {:.6} packets/slot, dropped {:.6} packets/slot, \
         energy {:.4} units ({} seeds x {} slots)",
        metrics.avg_throughput,
        metrics.avg_dropped,
        metrics.avg_energy,
        seeds.len(),
        horizon
    );
    Ok(())
}

/// Applies a preset sweep layout onto the loaded config and names the
/// swept parameter. The arrival preset pins the attack probability the
/// comparison holds fixed.
fn apply_figure(
    config: &mut RunConfig,
    figure: Option<FigureArg>,
) -> Result<SweptParameter, CliError> {
    match figure {
        None => SweptParameter::from_key(&config.sweep.parameter).ok_or_else(|| {
            CliError::Config(format!(
                "sweep.parameter {:?} is not p_attack or p_arrival",
                config.sweep.parameter
            ))
        }),
        Some(FigureArg::Jamming) => {
            config.sweep.parameter = "p_attack".into();
            Ok(SweptParameter::Attack)
        }
        Some(FigureArg::Arrival) => {
            config.sweep.parameter = "p_arrival".into();
            config.env.p_attack = 0.6;
            Ok(SweptParameter::Arrival)
        }
    }
}

fn sweep_stem(parameter: SweptParameter) -> &'static str {
    match parameter {
        SweptParameter::Attack => "jamming",
        SweptParameter::Arrival => "arrival",
    }
}

fn cmd_sweep(
    mut config: RunConfig,
    out_dir: &Path,
    figure: Option<FigureArg>,
) -> Result<(), CliError> {
    let parameter = apply_figure(&mut config, figure)?;
    let base = config.env.to_env_config()?;
    let trainer = config.trainer.to_spec()?;
    let strategies = config.sweep.strategy_kinds()?;
    config.evaluation.check()?;
    let spec = SweepSpec {
        parameter,
        values: config.sweep.values.clone(),
        base,
        strategies,
        trainer,
        horizon: config.sweep.horizon.unwrap_or(config.evaluation.horizon),
        seeds: config.sweep.seeds.clone().unwrap_or_else(|| config.evaluation.seeds.clone()),
        trainer_seed: config.sweep.trainer_seed,
    };
    let result = run_sweep(&spec)?;

    let mut manifest = formats::Manifest::new("sweep", &config);
    manifest.figure = figure.map(|f| f.name().to_string());
    let mut files = Outputs::new();
    files.add(&format!("sweep-{}.csv", sweep_stem(parameter)), |w| {
        formats::write_sweep_csv(w, &result)
    })?;
    files.add_manifest(&manifest);
    files.commit(out_dir)?;

    println!(
        "swept {} over {} values x {} strategies ({} rows)",
        parameter,
        spec.values.len(),
        spec.strategies.len(),
        result.rows.len()
    );
    if spec.strategies.len() == StrategyKind::ALL.len() {
        for line in summarize(&result)? {
            println!("{line}");
        }
    }
    Ok(())
}

fn cmd_kernel_dump(config: RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let env = config.env.to_env_config()?;
    let mut files = Outputs::new();
    files.add("kernel.csv", |w| formats::write_kernel_csv(w, &env))?;
    files.add_manifest(&formats::Manifest::new("kernel-dump", &config));
    files.commit(out_dir)?;
    println!(
        "kernel written for {} states ({} x {} grid)",
        env.state_count(),
        env.e_max + 1,
        env.d_max + 1
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn flags_parse_into_the_expected_command() {
        let cli = parse(&[
            "jamlure",
            "train",
            "--trainer",
            "dqn",
            "--steps",
            "5000",
            "--config",
            "run.toml",
            "--jobs",
            "4",
        ])
        .unwrap();
        assert_eq!(cli.config.as_deref(), Some(Path::new("run.toml")));
        assert_eq!(cli.jobs.map(NonZeroUsize::get), Some(4));
        match cli.command {
            Command::Train { trainer, steps, seed } => {
                assert_eq!(trainer, Some(TrainerArg::Dqn));
                assert_eq!(steps, Some(5000));
                assert_eq!(seed, None);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn zero_jobs_is_a_parse_error() {
        assert!(parse(&["jamlure", "oracle", "--jobs", "0"]).is_err());
        assert!(parse(&["jamlure", "oracle", "--jobs", "1"]).is_ok());
    }

    #[test]
    fn policy_file_and_strategy_flags_conflict() {
        assert!(
            parse(&["jamlure", "evaluate", "--policy", "p.csv", "--strategy", "wd"]).is_err()
        );
        assert!(parse(&["jamlure", "evaluate", "--strategy", "wd"]).is_ok());
    }

    #[test]
    fn figure_presets_rewrite_the_sweep_section() {
        let mut config = RunConfig::default();
        let p = apply_figure(&mut config, Some(FigureArg::Arrival)).unwrap();
        assert_eq!(p, SweptParameter::Arrival);
        assert_eq!(config.sweep.parameter, "p_arrival");
        assert_eq!(config.env.p_attack, 0.6);

        let mut config = RunConfig::default();
        config.env.p_attack = 0.9;
        let p = apply_figure(&mut config, Some(FigureArg::Jamming)).unwrap();
        assert_eq!(p, SweptParameter::Attack);
        assert_eq!(config.env.p_attack, 0.9, "jamming preset keeps the base env");

        config.sweep.parameter = "p_ambient".into();
        assert!(apply_figure(&mut config, None).is_err());
    }

    #[test]
    fn error_kinds_map_to_their_exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 2);
        let from_sweep: CliError = SweepError::InvalidSpec("empty".into()).into();
        assert_eq!(from_sweep.exit_code(), 1);
        let from_point: CliError = SweepError::Point {
            param: "p_attack",
            value: 0.5,
            strategy: StrategyKind::Proposed,
            message: "boom".into(),
        }
        .into();
        assert_eq!(from_point.exit_code(), 2);
    }

    #[test]
    fn vi_trainer_kind_cannot_train() {
        let err = cmd_train(
            RunConfig::default(),
            Path::new("/nonexistent-unused"),
            None,
            None,
            None,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("oracle"));
    }
}
