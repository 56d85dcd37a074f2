//! TOML run configuration: one file describing the environment, the
//! trainer, evaluation settings, and the sweep layout.
//!
//! Every key has a default, so an empty file (or no file at all) describes
//! the standard setup. Unknown keys are rejected rather than ignored, which
//! catches typos before a long run. Command-line flags override individual
//! keys after the file is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use jamlure_core::drl::{DqnHyperparams, EpsilonSchedule};
use jamlure_core::env::{ConfigError, EnvConfig, validate_config};
use jamlure_core::plan::TabularHyperparams;
use jamlure_core::strategy::{StrategyKind, TrainerSpec};

/// Root of the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory for all output files. Overridden by the `--output-dir`
    /// flag or the `JAMLURE_OUT_DIR` environment variable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvSection,
    pub trainer: TrainerSection,
    pub evaluation: EvalSection,
    pub sweep: SweepSection,
}

/// `[env]`: the simulated device and jammer. Field names match the core
/// environment configuration one to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub e_max: usize,
    pub d_max: usize,
    pub cost_fake: usize,
    pub cost_active: usize,
    pub tx_packets: usize,
    pub harvest_jam: usize,
    pub bs_packets: usize,
    pub p_attack: f64,
    pub p_arrival: f64,
    pub arrival_batch: usize,
    pub p_ambient: f64,
    pub ambient_gain: usize,
    #[serde(alias = "energy_unit_uJ")]
    pub energy_unit_uj: f64,
    pub packet_bits: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection::from_env_config(&EnvConfig::default())
    }
}

impl EnvSection {
    pub fn from_env_config(cfg: &EnvConfig) -> Self {
        EnvSection {
            e_max: cfg.e_max,
            d_max: cfg.d_max,
            cost_fake: cfg.cost_fake,
            cost_active: cfg.cost_active,
            tx_packets: cfg.tx_packets,
            harvest_jam: cfg.harvest_jam,
            bs_packets: cfg.bs_packets,
            p_attack: cfg.p_attack,
            p_arrival: cfg.p_arrival,
            arrival_batch: cfg.arrival_batch,
            p_ambient: cfg.p_ambient,
            ambient_gain: cfg.ambient_gain,
            energy_unit_uj: cfg.energy_unit_uj,
            packet_bits: cfg.packet_bits,
        }
    }

    /// Validated core configuration.
    pub fn to_env_config(&self) -> Result<EnvConfig, ConfigError> {
        validate_config(EnvConfig {
            e_max: self.e_max,
            d_max: self.d_max,
            cost_fake: self.cost_fake,
            cost_active: self.cost_active,
            tx_packets: self.tx_packets,
            harvest_jam: self.harvest_jam,
            bs_packets: self.bs_packets,
            p_attack: self.p_attack,
            p_arrival: self.p_arrival,
            arrival_batch: self.arrival_batch,
            p_ambient: self.p_ambient,
            ambient_gain: self.ambient_gain,
            energy_unit_uj: self.energy_unit_uj,
            packet_bits: self.packet_bits,
        })
    }
}

/// Which algorithm produces policies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    /// Exact planning over the known kernel.
    #[default]
    Vi,
    /// Tabular temporal-difference learning.
    Tabular,
    /// Neural training through the actor/learner loop.
    Dqn,
}

impl TrainerKind {
    pub fn code(self) -> &'static str {
        match self {
            TrainerKind::Vi => "vi",
            TrainerKind::Tabular => "tabular",
            TrainerKind::Dqn => "dqn",
        }
    }
}

/// `[trainer]`: one flat table; `kind` decides which keys matter and which
/// defaults fill the gaps. Keys belonging to another kind are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub kind: TrainerKind,
    /// Seed for learning trainers. Exact planning ignores it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Training interaction budget for tabular and neural trainers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_sync_rounds: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flush_interval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_eval_horizon: Option<u64>,
}

impl TrainerSection {
    pub fn trainer_seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    /// Resolves the section into a concrete trainer, applying per-kind
    /// defaults for absent keys and checking ranges.
    pub fn to_spec(&self) -> Result<TrainerSpec, ConfigFileError> {
        let gamma = self.gamma.unwrap_or(0.99);
        if !(0.0..1.0).contains(&gamma) {
            return Err(ConfigFileError::Invalid(format!(
                "trainer.gamma {gamma} outside [0, 1)"
            )));
        }
        match self.kind {
            TrainerKind::Vi => {
                let tol = self.tol.unwrap_or(1e-9);
                if !(tol > 0.0) {
                    return Err(ConfigFileError::Invalid(format!(
                        "trainer.tol {tol} must be positive"
                    )));
                }
                Ok(TrainerSpec::ValueIteration { gamma, tol })
            }
            TrainerKind::Tabular => {
                let base = TabularHyperparams::default();
                let hp = TabularHyperparams {
                    steps: self.steps.unwrap_or(base.steps),
                    gamma,
                    lr_exponent: self.lr_exponent.unwrap_or(base.lr_exponent),
                    epsilon_start: self.epsilon_start.unwrap_or(base.epsilon_start),
                    epsilon_end: self.epsilon_end.unwrap_or(base.epsilon_end),
                    epsilon_decay_steps: self
                        .epsilon_decay_steps
                        .unwrap_or(base.epsilon_decay_steps),
                    log_points: self.log_points.unwrap_or(base.log_points),
                };
                if hp.steps == 0 {
                    return Err(ConfigFileError::Invalid(
                        "trainer.steps is 0, no training requested".into(),
                    ));
                }
                for (name, eps) in
                    [("epsilon_start", hp.epsilon_start), ("epsilon_end", hp.epsilon_end)]
                {
                    if !(0.0..=1.0).contains(&eps) {
                        return Err(ConfigFileError::Invalid(format!(
                            "trainer.{name} {eps} outside [0, 1]"
                        )));
                    }
                }
                Ok(TrainerSpec::Tabular(hp))
            }
            TrainerKind::Dqn => {
                let base = DqnHyperparams::default();
                let hp = DqnHyperparams {
                    replay_capacity: self.replay_capacity.unwrap_or(base.replay_capacity),
                    batch_size: self.batch_size.unwrap_or(base.batch_size),
                    gamma,
                    epsilon: EpsilonSchedule {
                        start: self.epsilon_start.unwrap_or(base.epsilon.start),
                        end: self.epsilon_end.unwrap_or(base.epsilon.end),
                        decay_steps: self
                            .epsilon_decay_steps
                            .unwrap_or(base.epsilon.decay_steps),
                    },
                    target_sync_rounds: self
                        .target_sync_rounds
                        .unwrap_or(base.target_sync_rounds),
                    flush_interval: self.flush_interval.unwrap_or(base.flush_interval),
                    adam: jamlure_core::nn::AdamParams {
                        learning_rate: self.learning_rate.unwrap_or(base.adam.learning_rate),
                        ..base.adam
                    },
                    total_steps: self.steps.unwrap_or(base.total_steps),
                    hidden_widths: self
                        .hidden_widths
                        .clone()
                        .unwrap_or_else(|| base.hidden_widths.clone()),
                    log_eval_horizon: self.log_eval_horizon.unwrap_or(base.log_eval_horizon),
                };
                if hp.total_steps == 0 {
                    return Err(ConfigFileError::Invalid(
                        "trainer.steps is 0, no training requested".into(),
                    ));
                }
                hp.validate()
                    .map_err(|e| ConfigFileError::Invalid(format!("trainer: {e}")))?;
                Ok(TrainerSpec::Dqn(hp))
            }
        }
    }
}

/// `[evaluation]`: Monte Carlo evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Slots simulated per seed.
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { horizon: 100_000, seeds: (1..=10).collect() }
    }
}

impl EvalSection {
    pub fn check(&self) -> Result<(), ConfigFileError> {
        if self.horizon == 0 {
            return Err(ConfigFileError::Invalid("evaluation.horizon is 0".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigFileError::Invalid("evaluation.seeds is empty".into()));
        }
        Ok(())
    }
}

/// `[sweep]`: which parameter to sweep and over what, plus the strategy
/// list. Horizon and seeds fall back to the `[evaluation]` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `"p_attack"` or `"p_arrival"`.
    pub parameter: String,
    pub values: Vec<f64>,
    pub strategies: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Base seed from which each sweep point derives its trainer seed.
    pub trainer_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            parameter: "p_attack".into(),
            values: (1..=9).map(|i| i as f64 / 10.0).collect(),
            strategies: StrategyKind::ALL.iter().map(|k| k.code().into()).collect(),
            horizon: None,
            seeds: None,
            trainer_seed: 1,
        }
    }
}

impl SweepSection {
    pub fn strategy_kinds(&self) -> Result<Vec<StrategyKind>, ConfigFileError> {
        self.strategies
            .iter()
            .map(|name| {
                StrategyKind::from_code(name).ok_or_else(|| {
                    ConfigFileError::Invalid(format!("unknown strategy {name:?}"))
                })
            })
            .collect()
    }
}

/// Problems loading or interpreting a configuration file.
#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid environment: {0}")]
    Env(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

/// Loads and parses a configuration file. Values are range-checked later,
/// when each section is resolved.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigFileError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Output directory precedence: explicit flag or environment override,
/// then the config file, then `./out`.
pub fn resolve_output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("./out"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default_setup() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let env = cfg.env.to_env_config().unwrap();
        assert_eq!(env, EnvConfig::default());
        assert_eq!(cfg.trainer.to_spec().unwrap(), TrainerSpec::exact());
        assert_eq!(cfg.evaluation.horizon, 100_000);
        assert_eq!(cfg.evaluation.seeds.len(), 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[env]\np_atack = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("p_atack"));
        assert!(toml::from_str::<RunConfig>("retries = 3\n").is_err());
    }

    #[test]
    fn energy_unit_accepts_the_capitalized_spelling() {
        let cfg: RunConfig = toml::from_str("[env]\nenergy_unit_uJ = 45.0\n").unwrap();
        assert_eq!(cfg.env.energy_unit_uj, 45.0);
        let canonical: RunConfig = toml::from_str("[env]\nenergy_unit_uj = 45.0\n").unwrap();
        assert_eq!(cfg, canonical);
    }

    #[test]
    fn trainer_sections_resolve_with_per_kind_defaults() {
        let tab: RunConfig =
            toml::from_str("[trainer]\nkind = \"tabular\"\nsteps = 1000\n").unwrap();
        match tab.trainer.to_spec().unwrap() {
            TrainerSpec::Tabular(hp) => {
                assert_eq!(hp.steps, 1000);
                assert_eq!(hp.epsilon_end, 0.05);
                assert_eq!(hp.epsilon_decay_steps, 1_000_000);
            }
            other => panic!("resolved to {other:?}"),
        }
        let dqn: RunConfig =
            toml::from_str("[trainer]\nkind = \"dqn\"\nlearning_rate = 5e-4\n").unwrap();
        match dqn.trainer.to_spec().unwrap() {
            TrainerSpec::Dqn(hp) => {
                assert_eq!(hp.adam.learning_rate, 5e-4);
                assert_eq!(hp.epsilon.end, 0.01);
                assert_eq!(hp.total_steps, 200_000);
                assert_eq!(hp.hidden_widths, vec![200, 200]);
            }
            other => panic!("resolved to {other:?}"),
        }
    }

    #[test]
    fn zero_step_training_is_refused() {
        for kind in ["tabular", "dqn"] {
            let cfg: RunConfig =
                toml::from_str(&format!("[trainer]\nkind = \"{kind}\"\nsteps = 0\n")).unwrap();
            let err = cfg.trainer.to_spec().unwrap_err();
            assert!(err.to_string().contains("no training requested"), "{err}");
        }
    }

    #[test]
    fn out_of_range_values_are_refused() {
        let cfg: RunConfig = toml::from_str("[env]\np_attack = 1.5\n").unwrap();
        assert!(cfg.env.to_env_config().is_err());
        let bad_gamma: RunConfig = toml::from_str("[trainer]\ngamma = 1.0\n").unwrap();
        assert!(bad_gamma.trainer.to_spec().is_err());
        let bad_eps: RunConfig =
            toml::from_str("[trainer]\nkind = \"tabular\"\nepsilon_start = -0.1\n").unwrap();
        assert!(bad_eps.trainer.to_spec().is_err());
    }

    #[test]
    fn sweep_defaults_cover_the_full_grid() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.sweep.parameter, "p_attack");
        assert_eq!(cfg.sweep.values.len(), 9);
        assert!((cfg.sweep.values[0] - 0.1).abs() < 1e-12);
        assert!((cfg.sweep.values[8] - 0.9).abs() < 1e-12);
        assert_eq!(cfg.sweep.strategy_kinds().unwrap(), StrategyKind::ALL.to_vec());
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.env.p_attack = 0.35;
        cfg.trainer.kind = TrainerKind::Dqn;
        cfg.trainer.steps = Some(1_000);
        cfg.sweep.seeds = Some(vec![4, 5]);
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn output_dir_prefers_the_flag_then_the_file() {
        let mut cfg = RunConfig::default();
        assert_eq!(resolve_output_dir(None, &cfg), PathBuf::from("./out"));
        cfg.output_dir = Some(PathBuf::from("/tmp/from-file"));
        assert_eq!(resolve_output_dir(None, &cfg), PathBuf::from("/tmp/from-file"));
        assert_eq!(
            resolve_output_dir(Some(PathBuf::from("/tmp/from-flag")), &cfg),
            PathBuf::from("/tmp/from-flag")
        );
    }
}
