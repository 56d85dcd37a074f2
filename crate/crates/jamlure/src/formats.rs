//! Delimited text formats for every artifact the toolkit writes, plus the
//! binary weight snapshot and the run manifest.
//!
//! All writers are deterministic: rows come out in a fixed sort order and
//! floats use Rust's shortest round-trip formatting, so re-running a
//! command byte-identically reproduces its files. Readers are strict and
//! reject mismatched headers instead of guessing.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use jamlure_core::drl::TrainingLogRow;
use jamlure_core::env::{ActionKind, EnvConfig, State, enumerate_kernel, feasible_actions};
use jamlure_core::nn::MlpNetwork;
use jamlure_core::plan::{Policy, QTable, QlProgress};

use crate::config::RunConfig;
use crate::sweep::{SweepResult, SweepRow, SweptParameter};

use jamlure_core::strategy::StrategyKind;

/// Reading or decoding a stored artifact failed.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("weight snapshot: {0}")]
    Weights(String),
}

fn bad(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

/// Lines of `text` after verifying the exact header, tagged with their
/// 1-based line numbers.
fn body<'a>(
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>, FormatError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first == header => {}
        Some(first) => return Err(bad(1, format!("header {first:?}, expected {header:?}"))),
        None => return Err(bad(1, "empty file")),
    }
    Ok(lines
        .enumerate()
        .map(|(i, l)| (i + 2, l))
        .filter(|(_, l)| !l.is_empty()))
}

fn fields<'a>(
    line_no: usize,
    line: &'a str,
    expect: usize,
) -> Result<Vec<&'a str>, FormatError> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != expect {
        return Err(bad(line_no, format!("{} fields, expected {expect}", parts.len())));
    }
    Ok(parts)
}

fn parse<T: std::str::FromStr>(line_no: usize, s: &str, what: &str) -> Result<T, FormatError> {
    s.parse().map_err(|_| bad(line_no, format!("bad {what}: {s:?}")))
}

fn parse_action(line_no: usize, s: &str) -> Result<ActionKind, FormatError> {
    ActionKind::from_code(s).ok_or_else(|| bad(line_no, format!("bad action: {s:?}")))
}

pub const KERNEL_HEADER: &str =
    "energy,queue,action,prob,next_energy,next_queue,delivered,dropped";

/// Full transition kernel of `cfg`, one row per branch, feasible pairs in
/// state-major order and branches in enumeration order.
pub fn write_kernel_csv(mut w: impl Write, cfg: &EnvConfig) -> io::Result<()> {
    writeln!(w, "{KERNEL_HEADER}")?;
    for s in cfg.states() {
        for a in feasible_actions(s, cfg).iter() {
            let branches = enumerate_kernel(s, a, cfg).expect("pair is feasible");
            for b in branches {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    s.energy,
                    s.queue,
                    a.code(),
                    b.prob,
                    b.next.energy,
                    b.next.queue,
                    b.delivered,
                    b.dropped
                )?;
            }
        }
    }
    Ok(())
}

pub const QTABLE_HEADER: &str = "energy,queue,action,q_value";

/// Action values for every feasible pair of the table.
pub fn write_qtable_csv(mut w: impl Write, q: &QTable, cfg: &EnvConfig) -> io::Result<()> {
    writeln!(w, "{QTABLE_HEADER}")?;
    for (idx, a) in q.feasible_pairs() {
        let s = State::from_index(idx, cfg);
        writeln!(w, "{},{},{},{}", s.energy, s.queue, a.code(), q.get(idx, a))?;
    }
    Ok(())
}

/// Rows of a stored action-value table.
pub fn parse_qtable_csv(text: &str) -> Result<Vec<(usize, usize, ActionKind, f64)>, FormatError> {
    let mut rows = Vec::new();
    for (no, line) in body(text, QTABLE_HEADER)? {
        let f = fields(no, line, 4)?;
        rows.push((
            parse(no, f[0], "energy")?,
            parse(no, f[1], "queue")?,
            parse_action(no, f[2])?,
            parse(no, f[3], "q value")?,
        ));
    }
    Ok(rows)
}

pub const POLICY_HEADER: &str = "energy,queue,action";

/// One action per state, all states covered.
pub fn write_policy_csv(mut w: impl Write, policy: &Policy, cfg: &EnvConfig) -> io::Result<()> {
    writeln!(w, "{POLICY_HEADER}")?;
    for s in cfg.states() {
        writeln!(w, "{},{},{}", s.energy, s.queue, policy.action(s).code())?;
    }
    Ok(())
}

/// Reconstructs a policy, requiring exactly one feasible action per state
/// of `cfg`.
pub fn parse_policy_csv(text: &str, cfg: &EnvConfig) -> Result<Policy, FormatError> {
    let mut actions: Vec<Option<ActionKind>> = vec![None; cfg.state_count()];
    for (no, line) in body(text, POLICY_HEADER)? {
        let f = fields(no, line, 3)?;
        let e: usize = parse(no, f[0], "energy")?;
        let d: usize = parse(no, f[1], "queue")?;
        if e > cfg.e_max || d > cfg.d_max {
            return Err(bad(no, format!("state ({e}, {d}) outside the grid")));
        }
        let a = parse_action(no, f[2])?;
        let s = State::new(e, d);
        if !feasible_actions(s, cfg).contains(a) {
            return Err(bad(no, format!("action {} infeasible at {s}", a.code())));
        }
        let slot = &mut actions[s.index(cfg)];
        if slot.is_some() {
            return Err(bad(no, format!("duplicate state {s}")));
        }
        *slot = Some(a);
    }
    if let Some(missing) = actions.iter().position(|a| a.is_none()) {
        let s = State::from_index(missing, cfg);
        return Err(bad(0, format!("no action for state {s}")));
    }
    Ok(Policy::from_rule(cfg, |s| actions[s.index(cfg)].unwrap()))
}

pub const RESIDUAL_HEADER: &str = "energy,queue,action,residual";

/// Per-pair Bellman residuals of a solved table.
pub fn write_residuals_csv(
    mut w: impl Write,
    rows: &[(State, ActionKind, f64)],
) -> io::Result<()> {
    writeln!(w, "{RESIDUAL_HEADER}")?;
    for (s, a, r) in rows {
        writeln!(w, "{},{},{},{}", s.energy, s.queue, a.code(), r)?;
    }
    Ok(())
}

pub const TRAINING_LOG_HEADER: &str = "step,epsilon,loss,eval_throughput,eval_dropped";

/// Per-exchange log of the actor/learner trainer.
pub fn write_training_log_csv(mut w: impl Write, rows: &[TrainingLogRow]) -> io::Result<()> {
    writeln!(w, "{TRAINING_LOG_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.step, r.epsilon, r.loss, r.eval_throughput, r.eval_dropped
        )?;
    }
    Ok(())
}

pub fn parse_training_log_csv(text: &str) -> Result<Vec<TrainingLogRow>, FormatError> {
    let mut rows = Vec::new();
    for (no, line) in body(text, TRAINING_LOG_HEADER)? {
        let f = fields(no, line, 5)?;
        rows.push(TrainingLogRow {
            step: parse(no, f[0], "step")?,
            epsilon: parse(no, f[1], "epsilon")?,
            loss: parse(no, f[2], "loss")?,
            eval_throughput: parse(no, f[3], "throughput")?,
            eval_dropped: parse(no, f[4], "dropped")?,
        });
    }
    Ok(rows)
}

pub const TABULAR_LOG_HEADER: &str = "step,epsilon,oracle_distance";

/// Progress log of the tabular trainer. The distance column is empty when
/// no reference table was supplied.
pub fn write_tabular_log_csv(mut w: impl Write, rows: &[QlProgress]) -> io::Result<()> {
    writeln!(w, "{TABULAR_LOG_HEADER}")?;
    for r in rows {
        match r.oracle_distance {
            Some(d) => writeln!(w, "{},{},{}", r.step, r.epsilon, d)?,
            None => writeln!(w, "{},{},", r.step, r.epsilon)?,
        }
    }
    Ok(())
}

pub fn parse_tabular_log_csv(text: &str) -> Result<Vec<QlProgress>, FormatError> {
    let mut rows = Vec::new();
    for (no, line) in body(text, TABULAR_LOG_HEADER)? {
        let f = fields(no, line, 3)?;
        rows.push(QlProgress {
            step: parse(no, f[0], "step")?,
            epsilon: parse(no, f[1], "epsilon")?,
            oracle_distance: if f[2].is_empty() {
                None
            } else {
                Some(parse(no, f[2], "distance")?)
            },
        });
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str =
    "param,value,strategy,throughput,throughput_ci,dropped,dropped_ci,seeds,horizon";

/// Aggregated sweep table, rows already in the harness's merge order.
pub fn write_sweep_csv(mut w: impl Write, result: &SweepResult) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.param.key(),
            r.value,
            r.strategy.code(),
            r.throughput,
            r.throughput_ci,
            r.dropped,
            r.dropped_ci,
            r.seeds,
            r.horizon
        )?;
    }
    Ok(())
}

pub fn parse_sweep_csv(text: &str) -> Result<SweepResult, FormatError> {
    let mut rows = Vec::new();
    for (no, line) in body(text, SWEEP_HEADER)? {
        let f = fields(no, line, 9)?;
        let param = SweptParameter::from_key(f[0])
            .ok_or_else(|| bad(no, format!("bad parameter: {:?}", f[0])))?;
        let strategy = StrategyKind::from_code(f[2])
            .ok_or_else(|| bad(no, format!("bad strategy: {:?}", f[2])))?;
        rows.push(SweepRow {
            param,
            value: parse(no, f[1], "value")?,
            strategy,
            throughput: parse(no, f[3], "throughput")?,
            throughput_ci: parse(no, f[4], "throughput ci")?,
            dropped: parse(no, f[5], "dropped")?,
            dropped_ci: parse(no, f[6], "dropped ci")?,
            seeds: parse(no, f[7], "seeds")?,
            horizon: parse(no, f[8], "horizon")?,
        });
    }
    Ok(SweepResult { rows })
}

/// Seeded per-run evaluation rows.
pub const EVALUATION_HEADER: &str = "seed,throughput,dropped,energy";

pub fn write_evaluation_csv(
    mut w: impl Write,
    per_seed: &[jamlure_core::plan::SeedMetrics],
) -> io::Result<()> {
    writeln!(w, "{EVALUATION_HEADER}")?;
    for m in per_seed {
        writeln!(w, "{},{},{},{}", m.seed, m.throughput, m.dropped, m.energy)?;
    }
    Ok(())
}

/// Writes a weight snapshot in the network's versioned binary format.
pub fn write_weights(path: &Path, net: &MlpNetwork) -> io::Result<()> {
    std::fs::write(path, net.to_bytes())
}

pub fn read_weights(path: &Path) -> Result<MlpNetwork, FormatError> {
    let bytes = std::fs::read(path)?;
    MlpNetwork::from_bytes(&bytes).map_err(|e| FormatError::Weights(e.to_string()))
}

/// Everything needed to regenerate a command's outputs: the command line
/// essentials plus the fully resolved configuration. Contains no clocks or
/// machine identity, so a rerun writes identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub figure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trainer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strategy: Option<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            figure: None,
            trainer: None,
            strategy: None,
            config: config.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> io::Result<()> {
    std::fs::write(path, manifest.to_toml())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, FormatError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| bad(0, format!("manifest {}: {e}", path.display())))
}
