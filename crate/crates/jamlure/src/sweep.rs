//! Parameter sweeps over the jamming or arrival probability: train each
//! (value, strategy) point independently, evaluate over seeded runs, and
//! aggregate into a result table with confidence intervals.

use std::fmt;

use rand_chacha::ChaCha12Rng;
use rand_core::SeedableRng;
use rayon::prelude::*;

use jamlure_core::env::{EnvConfig, validate_config};
use jamlure_core::plan::evaluate_policy;
use jamlure_core::strategy::{StrategyKind, TrainerSpec, build_strategy};

/// Which probability the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweptParameter {
    Attack,
    Arrival,
}

impl SweptParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweptParameter::Attack => "p_attack",
            SweptParameter::Arrival => "p_arrival",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match key.trim() {
            "p_attack" => Some(SweptParameter::Attack),
            "p_arrival" => Some(SweptParameter::Arrival),
            _ => None,
        }
    }

    fn apply(self, base: &EnvConfig, value: f64) -> EnvConfig {
        let mut cfg = base.clone();
        match self {
            SweptParameter::Attack => cfg.p_attack = value,
            SweptParameter::Arrival => cfg.p_arrival = value,
        }
        cfg
    }
}

impl fmt::Display for SweptParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Everything one sweep needs. Identical specs give identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweptParameter,
    pub values: Vec<f64>,
    pub base: EnvConfig,
    pub strategies: Vec<StrategyKind>,
    pub trainer: TrainerSpec,
    /// Slots simulated per evaluation seed.
    pub horizon: u64,
    /// Evaluation seeds, shared by every sweep point so comparisons pair up.
    pub seeds: Vec<u64>,
    /// Base seed; each point derives its own trainer stream from it.
    pub trainer_seed: u64,
}

/// Aggregated outcome of one (value, strategy) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub param: SweptParameter,
    pub value: f64,
    pub strategy: StrategyKind,
    pub throughput: f64,
    /// Half-width of the 95% interval over seeds.
    pub throughput_ci: f64,
    pub dropped: f64,
    pub dropped_ci: f64,
    pub seeds: usize,
    pub horizon: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Sweep failures, pointing at the offending input where one exists.
#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("sweep point {param} = {value}, strategy {strategy}: {message}")]
    Point { param: &'static str, value: f64, strategy: StrategyKind, message: String },
    #[error("no {strategy} row at {param} = {value}")]
    MissingStrategy { param: &'static str, value: f64, strategy: StrategyKind },
}

fn check_spec(spec: &SweepSpec) -> Result<(), SweepError> {
    if spec.values.is_empty() {
        return Err(SweepError::InvalidSpec("value list is empty".into()));
    }
    if spec.strategies.is_empty() {
        return Err(SweepError::InvalidSpec("strategy list is empty".into()));
    }
    if spec.seeds.is_empty() {
        return Err(SweepError::InvalidSpec("seed list is empty".into()));
    }
    if spec.horizon == 0 {
        return Err(SweepError::InvalidSpec("horizon is 0".into()));
    }
    for &v in &spec.values {
        if !(0.0..=1.0).contains(&v) {
            return Err(SweepError::InvalidSpec(format!(
                "{} = {v} is not a probability",
                spec.parameter
            )));
        }
    }
    Ok(())
}

/// Decorrelates per-point trainer streams from one base seed.
fn derive_seed(base: u64, value_index: u64, strategy_index: u64) -> u64 {
    let mut z = base
        ^ value_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ strategy_index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 95% half-width from the per-seed spread; zero below two seeds.
fn half_width(samples: &[f64], mean: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let var =
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    1.96 * (var / n as f64).sqrt()
}

/// Runs every (value, strategy) point in parallel and merges rows in the
/// spec's value-major order. Each point trains fresh from its own derived
/// seed; evaluation reuses the shared seed list.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    check_spec(spec)?;
    let tasks: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|vi| (0..spec.strategies.len()).map(move |si| (vi, si)))
        .collect();
    let mut rows: Vec<(usize, usize, SweepRow)> = tasks
        .into_par_iter()
        .map(|(vi, si)| {
            let value = spec.values[vi];
            let strategy = spec.strategies[si];
            let annotate = |message: String| SweepError::Point {
                param: spec.parameter.key(),
                value,
                strategy,
                message,
            };
            let cfg = validate_config(spec.parameter.apply(&spec.base, value))
                .map_err(|e| annotate(e.to_string()))?;
            let mut rng =
                ChaCha12Rng::seed_from_u64(derive_seed(spec.trainer_seed, vi as u64, si as u64));
            let policy = build_strategy(strategy, &cfg, &spec.trainer, &mut rng);
            let metrics = evaluate_policy(&cfg, &policy, spec.horizon, &spec.seeds);
            let throughputs: Vec<f64> =
                metrics.per_seed.iter().map(|m| m.throughput).collect();
            let drops: Vec<f64> = metrics.per_seed.iter().map(|m| m.dropped).collect();
            Ok((
                vi,
                si,
                SweepRow {
                    param: spec.parameter,
                    value,
                    strategy,
                    throughput: metrics.avg_throughput,
                    throughput_ci: half_width(&throughputs, metrics.avg_throughput),
                    dropped: metrics.avg_dropped,
                    dropped_ci: half_width(&drops, metrics.avg_dropped),
                    seeds: spec.seeds.len(),
                    horizon: spec.horizon,
                },
            ))
        })
        .collect::<Result<_, SweepError>>()?;
    rows.sort_by_key(|&(vi, si, _)| (vi, si));
    Ok(SweepResult { rows: rows.into_iter().map(|(_, _, row)| row).collect() })
}

/// Throughput of the full strategy relative to each baseline at one sweep
/// point, plus whether the expected ordering held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub value: f64,
    pub proposed: f64,
    pub over_dh: f64,
    pub over_db: f64,
    pub over_wd: f64,
    /// Proposed >= DH >= DB >= WD at this point.
    pub ordered: bool,
}

impl fmt::Display for PointSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "value {}: proposed {:.4}, x{:.3} over dh, x{:.3} over db, x{:.3} over wd, ordered {}",
            self.value, self.proposed, self.over_dh, self.over_db, self.over_wd, self.ordered
        )
    }
}

/// Per-point strategy comparison. Every sweep value must carry all four
/// strategies.
pub fn summarize(result: &SweepResult) -> Result<Vec<PointSummary>, SweepError> {
    let mut values: Vec<f64> = Vec::new();
    for row in &result.rows {
        if !values.iter().any(|&v| v == row.value) {
            values.push(row.value);
        }
    }
    let mut summaries = Vec::with_capacity(values.len());
    for value in values {
        let param = result
            .rows
            .iter()
            .find(|r| r.value == value)
            .map(|r| r.param.key())
            .unwrap_or("value");
        let find = |kind: StrategyKind| -> Result<f64, SweepError> {
            result
                .rows
                .iter()
                .find(|r| r.value == value && r.strategy == kind)
                .map(|r| r.throughput)
                .ok_or(SweepError::MissingStrategy { param, value, strategy: kind })
        };
        let proposed = find(StrategyKind::Proposed)?;
        let dh = find(StrategyKind::DeceptionHarvest)?;
        let db = find(StrategyKind::DeceptionBackscatter)?;
        let wd = find(StrategyKind::WithoutDeception)?;
        summaries.push(PointSummary {
            value,
            proposed,
            over_dh: proposed / dh,
            over_db: proposed / db,
            over_wd: proposed / wd,
            ordered: proposed >= dh && dh >= db && db >= wd,
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, strategy: StrategyKind, throughput: f64) -> SweepRow {
        SweepRow {
            param: SweptParameter::Attack,
            value,
            strategy,
            throughput,
            throughput_ci: 0.0,
            dropped: 0.0,
            dropped_ci: 0.0,
            seeds: 1,
            horizon: 100,
        }
    }

    #[test]
    fn parameter_keys_round_trip() {
        for p in [SweptParameter::Attack, SweptParameter::Arrival] {
            assert_eq!(SweptParameter::from_key(p.key()), Some(p));
        }
        assert_eq!(SweptParameter::from_key("p_ambient"), None);
    }

    #[test]
    fn derived_seeds_differ_across_the_grid() {
        let mut seen = std::collections::HashSet::new();
        for base in [0, 1] {
            for vi in 0..9 {
                for si in 0..4 {
                    seen.insert(derive_seed(base, vi, si));
                }
            }
        }
        assert_eq!(seen.len(), 2 * 9 * 4);
    }

    #[test]
    fn equal_rows_summarize_to_unit_ratios() {
        let rows: Vec<SweepRow> =
            StrategyKind::ALL.iter().map(|&k| row(0.5, k, 0.25)).collect();
        let summary = summarize(&SweepResult { rows }).unwrap();
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].over_dh, 1.0);
        assert_eq!(summary[0].over_db, 1.0);
        assert_eq!(summary[0].over_wd, 1.0);
        assert!(summary[0].ordered);
    }

    #[test]
    fn summaries_demand_every_strategy() {
        let rows = vec![
            row(0.5, StrategyKind::Proposed, 0.3),
            row(0.5, StrategyKind::DeceptionHarvest, 0.2),
            row(0.5, StrategyKind::WithoutDeception, 0.1),
        ];
        let err = summarize(&SweepResult { rows }).unwrap_err();
        assert!(matches!(
            err,
            SweepError::MissingStrategy { strategy: StrategyKind::DeceptionBackscatter, .. }
        ));
    }

    #[test]
    fn bad_specs_are_rejected_up_front() {
        let spec = SweepSpec {
            parameter: SweptParameter::Attack,
            values: vec![],
            base: EnvConfig::default(),
            strategies: vec![StrategyKind::Proposed],
            trainer: TrainerSpec::exact(),
            horizon: 100,
            seeds: vec![1],
            trainer_seed: 1,
        };
        assert!(matches!(run_sweep(&spec), Err(SweepError::InvalidSpec(_))));
        let out_of_range = SweepSpec { values: vec![0.5, 1.5], ..spec };
        assert!(matches!(run_sweep(&out_of_range), Err(SweepError::InvalidSpec(_))));
    }

    #[test]
    fn interval_half_width_shrinks_sensibly() {
        assert_eq!(half_width(&[0.5], 0.5), 0.0);
        let w2 = half_width(&[0.4, 0.6], 0.5);
        let w8 = half_width(&[0.4, 0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.6], 0.5);
        assert!(w2 > w8, "{w2} vs {w8}");
    }
}
