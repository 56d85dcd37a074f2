//! The four transmission strategies compared by the toolkit, behind one
//! policy-producing interface.
//!
//! The full strategy may use every operation mode. Two ablations train
//! with one deception mode removed, and the deception-free baseline is a
//! fixed rule that transmits whenever it has data and energy. Restrictions
//! are architectural: an excluded action is removed from the candidate set
//! at every decision point, not merely discouraged.

use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::drl::{DqnHyperparams, actor_learner_loop_restricted, greedy_policy_from_net};
use crate::env::{ActionKind, ActionSet, EnvConfig, State};
use crate::plan::{
    Policy, TabularHyperparams, q_learning_restricted, value_iteration_restricted,
};

/// Which comparison strategy to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// All four operation modes available.
    Proposed,
    /// Deception limited to energy harvesting; no backscatter reply.
    DeceptionHarvest,
    /// Deception limited to backscatter replies; no jamming harvest.
    DeceptionBackscatter,
    /// Fixed transmit-or-harvest rule; never deceives and never trains.
    WithoutDeception,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Proposed,
        StrategyKind::DeceptionHarvest,
        StrategyKind::DeceptionBackscatter,
        StrategyKind::WithoutDeception,
    ];

    /// Short name used in configuration files and on the command line.
    pub fn code(self) -> &'static str {
        match self {
            StrategyKind::Proposed => "proposed",
            StrategyKind::DeceptionHarvest => "dh",
            StrategyKind::DeceptionBackscatter => "db",
            StrategyKind::WithoutDeception => "wd",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(code.trim()))
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// The deception-free rule: transmit whenever the queue holds data and the
/// battery covers a transmission, harvest otherwise.
pub fn wd_policy(s: State, cfg: &EnvConfig) -> ActionKind {
    if s.queue >= 1 && s.energy >= cfg.cost_active {
        ActionKind::ActiveTransmit
    } else {
        ActionKind::PassiveHarvest
    }
}

/// Actions a strategy's trainer may consider.
pub fn restricted_action_set(kind: StrategyKind) -> ActionSet {
    match kind {
        StrategyKind::Proposed => ActionSet::all(),
        StrategyKind::DeceptionHarvest => ActionSet::from_actions(&[
            ActionKind::PassiveHarvest,
            ActionKind::ActiveTransmit,
            ActionKind::DeceiveHarvest,
        ]),
        StrategyKind::DeceptionBackscatter => ActionSet::from_actions(&[
            ActionKind::PassiveHarvest,
            ActionKind::ActiveTransmit,
            ActionKind::DeceiveBackscatter,
        ]),
        StrategyKind::WithoutDeception => ActionSet::from_actions(&[
            ActionKind::PassiveHarvest,
            ActionKind::ActiveTransmit,
        ]),
    }
}

/// How a strategy's policy is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainerSpec {
    /// Exact dynamic programming over the known kernel.
    ValueIteration { gamma: f64, tol: f64 },
    /// Tabular temporal-difference learning from simulated interaction.
    Tabular(TabularHyperparams),
    /// Neural Q-learning through the actor/learner loop.
    Dqn(DqnHyperparams),
}

impl TrainerSpec {
    pub fn exact() -> Self {
        TrainerSpec::ValueIteration { gamma: 0.99, tol: 1e-9 }
    }
}

/// Produces the decision policy for a strategy.
///
/// The rule-based strategy ignores the trainer entirely. The others run
/// the chosen trainer over their restricted action set and return its
/// greedy policy. `rng` drives learning trainers; exact planning never
/// touches it.
pub fn build_strategy(
    kind: StrategyKind,
    cfg: &EnvConfig,
    trainer: &TrainerSpec,
    rng: &mut impl RngCore,
) -> Policy {
    if kind == StrategyKind::WithoutDeception {
        return Policy::from_rule(cfg, |s| wd_policy(s, cfg));
    }
    let allowed = restricted_action_set(kind);
    match trainer {
        TrainerSpec::ValueIteration { gamma, tol } => {
            value_iteration_restricted(cfg, *gamma, *tol, allowed).policy
        }
        TrainerSpec::Tabular(hp) => {
            let (q, _) = q_learning_restricted(cfg, hp, rng, allowed, None);
            Policy::greedy_from(&q, cfg)
        }
        TrainerSpec::Dqn(hp) => {
            let (net, _) = actor_learner_loop_restricted(cfg, hp, allowed, rng);
            greedy_policy_from_net(&net, cfg, allowed)
        }
    }
}

/// Policies for several strategies under one trainer, in input order.
pub fn build_strategies(
    kinds: &[StrategyKind],
    cfg: &EnvConfig,
    trainer: &TrainerSpec,
    rng: &mut impl RngCore,
) -> Vec<(StrategyKind, Policy)> {
    kinds
        .iter()
        .map(|&k| (k, build_strategy(k, cfg, trainer, rng)))
        .collect()
}
