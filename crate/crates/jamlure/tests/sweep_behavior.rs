//! Library-level sweep harness checks: equivalence with plain evaluation,
//! reproducibility, and interval behavior.

use jamlure::sweep::{SweepSpec, SweptParameter, run_sweep};
use jamlure_core::env::EnvConfig;
use jamlure_core::plan::{Policy, evaluate_policy};
use jamlure_core::strategy::{StrategyKind, TrainerSpec, wd_policy};

fn spec(values: Vec<f64>, strategies: Vec<StrategyKind>, seeds: Vec<u64>) -> SweepSpec {
    SweepSpec {
        parameter: SweptParameter::Attack,
        values,
        base: EnvConfig::default(),
        strategies,
        trainer: TrainerSpec::exact(),
        horizon: 20_000,
        seeds,
        trainer_seed: 1,
    }
}

#[test]
fn single_point_rule_sweep_is_plain_evaluation() {
    let spec = spec(vec![0.0], vec![StrategyKind::WithoutDeception], vec![7, 8, 9]);
    let result = run_sweep(&spec).unwrap();
    assert_eq!(result.rows.len(), 1);

    let cfg = EnvConfig { p_attack: 0.0, ..EnvConfig::default() };
    let policy = Policy::from_rule(&cfg, |s| wd_policy(s, &cfg));
    let direct = evaluate_policy(&cfg, &policy, 20_000, &[7, 8, 9]);
    assert_eq!(result.rows[0].throughput, direct.avg_throughput);
    assert_eq!(result.rows[0].dropped, direct.avg_dropped);
}

#[test]
fn identical_specs_reproduce_identical_rows() {
    let spec = spec(
        vec![0.2, 0.6],
        vec![StrategyKind::Proposed, StrategyKind::DeceptionBackscatter],
        vec![1, 2, 3, 4],
    );
    let first = run_sweep(&spec).unwrap();
    let second = run_sweep(&spec).unwrap();
    assert_eq!(first, second);
}

#[test]
fn points_do_not_contaminate_each_other() {
    let pair = run_sweep(&spec(vec![0.3, 0.6], vec![StrategyKind::Proposed], vec![1, 2]))
        .unwrap();
    let single =
        run_sweep(&spec(vec![0.6], vec![StrategyKind::Proposed], vec![1, 2])).unwrap();
    let from_pair = pair.rows.iter().find(|r| r.value == 0.6).unwrap();
    // Exact planning is seed-free, so the same point must come out
    // identical whether or not other points ran beside it.
    assert_eq!(from_pair.throughput, single.rows[0].throughput);
    assert_eq!(from_pair.throughput_ci, single.rows[0].throughput_ci);
}

#[test]
fn longer_seed_lists_tighten_the_interval() {
    let narrow = run_sweep(&spec(
        vec![0.6],
        vec![StrategyKind::Proposed],
        (1..=4).collect(),
    ))
    .unwrap();
    let wide = run_sweep(&spec(
        vec![0.6],
        vec![StrategyKind::Proposed],
        (1..=40).collect(),
    ))
    .unwrap();
    assert!(
        wide.rows[0].throughput_ci < narrow.rows[0].throughput_ci,
        "{} vs {}",
        wide.rows[0].throughput_ci,
        narrow.rows[0].throughput_ci
    );
    assert!((wide.rows[0].throughput - narrow.rows[0].throughput).abs() < 0.02);
}

#[test]
fn failing_points_are_identified() {
    let bad = SweepSpec {
        base: EnvConfig { e_max: 0, ..EnvConfig::default() },
        ..spec(vec![0.5], vec![StrategyKind::Proposed], vec![1])
    };
    let err = run_sweep(&bad).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("0.5"), "{msg}");
    assert!(msg.contains("proposed"), "{msg}");
}
