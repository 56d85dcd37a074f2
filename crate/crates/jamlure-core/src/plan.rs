//! Planning over the exact kernel: value iteration as the ground-truth
//! oracle, tabular Q-learning as the sampled counterpart, and seeded policy
//! evaluation.
//!
//! All greedy lookups break ties by the fixed action order, so identical
//! tables always give identical policies.

use alloc::vec;
use alloc::vec::Vec;
use rand_core::{RngCore, SeedableRng};

use crate::env::{
    ActionKind, ActionSet, EnvConfig, State, enumerate_kernel, feasible_actions, step,
};
use crate::sample::{bernoulli, uniform_index};

/// Dense action-value table over `(e_max + 1) * (d_max + 1)` states by 4
/// actions. Entries for infeasible pairs are flagged and never win a greedy
/// lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    feasible: Vec<bool>,
    states: usize,
}

impl QTable {
    /// Zero-initialized table; feasibility comes from the environment
    /// intersected with `allowed` (the strategy's action set).
    pub fn new(cfg: &EnvConfig, allowed: ActionSet) -> QTable {
        let states = cfg.state_count();
        let mut feasible = vec![false; states * 4];
        for s in cfg.states() {
            let feas = feasible_actions(s, cfg).intersect(allowed);
            for a in feas.iter() {
                feasible[s.index(cfg) * 4 + a.index()] = true;
            }
        }
        QTable { values: vec![0.0; states * 4], feasible, states }
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    fn slot(&self, state_index: usize, a: ActionKind) -> usize {
        debug_assert!(state_index < self.states);
        state_index * 4 + a.index()
    }

    pub fn get(&self, state_index: usize, a: ActionKind) -> f64 {
        self.values[self.slot(state_index, a)]
    }

    pub fn set(&mut self, state_index: usize, a: ActionKind, value: f64) {
        let slot = self.slot(state_index, a);
        self.values[slot] = value;
    }

    pub fn is_feasible(&self, state_index: usize, a: ActionKind) -> bool {
        self.feasible[self.slot(state_index, a)]
    }

    /// Feasible `(state index, action)` pairs in table order.
    pub fn feasible_pairs(&self) -> impl Iterator<Item = (usize, ActionKind)> + '_ {
        (0..self.states).flat_map(move |s| {
            ActionKind::ALL
                .into_iter()
                .filter(move |a| self.is_feasible(s, *a))
                .map(move |a| (s, a))
        })
    }

    /// Highest feasible action value of a state.
    pub fn max_value(&self, state_index: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for a in ActionKind::ALL {
            if self.is_feasible(state_index, a) {
                best = best.max(self.get(state_index, a));
            }
        }
        debug_assert!(best.is_finite(), "state {state_index} has no feasible action");
        best
    }

    /// Greedy action; ties go to the earliest action in the fixed order.
    pub fn greedy(&self, state_index: usize) -> ActionKind {
        let mut best: Option<(ActionKind, f64)> = None;
        for a in ActionKind::ALL {
            if !self.is_feasible(state_index, a) {
                continue;
            }
            let v = self.get(state_index, a);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((a, v));
            }
        }
        best.expect("state has no feasible action").0
    }

    /// Largest absolute difference over pairs feasible in both tables.
    pub fn max_norm_distance(&self, other: &QTable) -> f64 {
        debug_assert_eq!(self.states, other.states);
        let mut worst = 0.0f64;
        for (s, a) in self.feasible_pairs() {
            if other.is_feasible(s, a) {
                worst = worst.max((self.get(s, a) - other.get(s, a)).abs());
            }
        }
        worst
    }
}

/// Deterministic state-to-action map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<ActionKind>,
    cols: usize,
}

impl Policy {
    /// Builds a policy by asking `decide` for every state. The chosen action
    /// must be feasible; this is asserted here so a broken rule fails fast.
    pub fn from_rule(cfg: &EnvConfig, mut decide: impl FnMut(State) -> ActionKind) -> Policy {
        let actions = cfg
            .states()
            .map(|s| {
                let a = decide(s);
                assert!(
                    feasible_actions(s, cfg).contains(a),
                    "policy picked infeasible {a} in {s}"
                );
                a
            })
            .collect();
        Policy { actions, cols: cfg.d_max + 1 }
    }

    /// Greedy policy of a table.
    pub fn greedy_from(q: &QTable, cfg: &EnvConfig) -> Policy {
        Policy::from_rule(cfg, |s| q.greedy(s.index(cfg)))
    }

    pub fn action(&self, s: State) -> ActionKind {
        self.actions[s.energy * self.cols + s.queue]
    }

    pub fn state_count(&self) -> usize {
        self.actions.len()
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct ValueIterationOutcome {
    pub q: QTable,
    pub policy: Policy,
    /// Number of full Bellman backups performed.
    pub iterations: usize,
    /// Sup-norm change of each backup, in order; contraction makes the
    /// sequence (essentially) non-increasing.
    pub deltas: Vec<f64>,
}

/// Value iteration restricted to the full action set.
pub fn value_iteration(cfg: &EnvConfig, gamma: f64, tol: f64) -> ValueIterationOutcome {
    value_iteration_restricted(cfg, gamma, tol, ActionSet::all())
}

/// Bellman backups over the exact kernel until the sup-norm update falls
/// below `tol`; returns the post-threshold table, whose own residual is then
/// below `gamma * tol`.
///
/// `allowed` restricts the action set (deception-free baselines train on the
/// same dynamics with fewer choices). Requires `0 <= gamma < 1` and
/// `tol > 0`; a finite discounted MDP then converges unconditionally.
pub fn value_iteration_restricted(
    cfg: &EnvConfig,
    gamma: f64,
    tol: f64,
    allowed: ActionSet,
) -> ValueIterationOutcome {
    assert!((0.0..1.0).contains(&gamma), "gamma must be in [0, 1)");
    assert!(tol > 0.0, "tol must be positive");

    let mut q = QTable::new(cfg, allowed);
    // One backup per feasible pair: (state index, action, [(prob, next
    // index)], expected immediate reward).
    let mut backups: Vec<(usize, ActionKind, Vec<(f64, usize)>, f64)> = Vec::new();
    for s in cfg.states() {
        for a in feasible_actions(s, cfg).intersect(allowed).iter() {
            let branches = enumerate_kernel(s, a, cfg).expect("feasible pair");
            let reward: f64 = branches.iter().map(|b| b.prob * b.delivered as f64).sum();
            let next: Vec<(f64, usize)> =
                branches.iter().map(|b| (b.prob, b.next.index(cfg))).collect();
            backups.push((s.index(cfg), a, next, reward));
        }
    }

    let states = cfg.state_count();
    let mut value = vec![0.0f64; states];
    let mut iterations = 0;
    let mut deltas = Vec::new();
    loop {
        for (i, v) in value.iter_mut().enumerate() {
            *v = q.max_value(i);
        }
        let mut delta = 0.0f64;
        for (s, a, next, reward) in &backups {
            let mut backed = *reward;
            for (p, j) in next {
                backed += p * gamma * value[*j];
            }
            delta = delta.max((backed - q.get(*s, *a)).abs());
            q.set(*s, *a, backed);
        }
        iterations += 1;
        deltas.push(delta);
        if delta < tol {
            break;
        }
    }

    let policy = Policy::greedy_from(&q, cfg);
    ValueIterationOutcome { q, policy, iterations, deltas }
}

/// Absolute Bellman residual of every feasible pair of `q`, recomputed
/// directly from the enumerated kernel rather than from any state cached by
/// the solver. A table returned by [`value_iteration_restricted`] with
/// threshold `tol` stays below `gamma * tol` here.
pub fn bellman_residuals(
    q: &QTable,
    cfg: &EnvConfig,
    gamma: f64,
) -> Vec<(State, ActionKind, f64)> {
    let mut rows = Vec::new();
    for (idx, a) in q.feasible_pairs() {
        let s = State::from_index(idx, cfg);
        let branches = enumerate_kernel(s, a, cfg).expect("feasible pair");
        let mut backed = 0.0;
        for b in &branches {
            backed += b.prob * (b.delivered as f64 + gamma * q.max_value(b.next.index(cfg)));
        }
        rows.push((s, a, (q.get(idx, a) - backed).abs()));
    }
    rows
}

/// Hyperparameters of the tabular learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularHyperparams {
    pub steps: u64,
    pub gamma: f64,
    /// Per-pair learning rate `(1 + visits(s, a))^-lr_exponent`, with the
    /// visit count taken before the update.
    pub lr_exponent: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which epsilon decays linearly before holding at the end
    /// value.
    pub epsilon_decay_steps: u64,
    /// Number of progress snapshots taken over the run.
    pub log_points: usize,
}

impl Default for TabularHyperparams {
    fn default() -> Self {
        TabularHyperparams {
            steps: 2_000_000,
            gamma: 0.99,
            lr_exponent: 0.6,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 1_000_000,
            log_points: 100,
        }
    }
}

/// One progress snapshot of the tabular learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QlProgress {
    pub step: u64,
    pub epsilon: f64,
    /// Max-norm distance to the reference table, when one was supplied.
    pub oracle_distance: Option<f64>,
}

/// Tabular Q-learning over the full action set; see
/// [`q_learning_restricted`].
pub fn q_learning(
    cfg: &EnvConfig,
    hp: &TabularHyperparams,
    rng: &mut impl RngCore,
    reference: Option<&QTable>,
) -> (QTable, Vec<QlProgress>) {
    q_learning_restricted(cfg, hp, rng, ActionSet::all(), reference)
}

/// Epsilon-greedy tabular Q-learning on the sampled environment.
///
/// The chain is continuing: it starts at `(0, 0)` and is never reset.
/// Infeasible (or disallowed) actions are masked both when selecting and in
/// the bootstrap max. Returns the learned table plus periodic snapshots; the
/// snapshots carry the max-norm distance to `reference` when given.
pub fn q_learning_restricted(
    cfg: &EnvConfig,
    hp: &TabularHyperparams,
    rng: &mut impl RngCore,
    allowed: ActionSet,
    reference: Option<&QTable>,
) -> (QTable, Vec<QlProgress>) {
    let mut q = QTable::new(cfg, allowed);
    let mut visits = vec![0u64; cfg.state_count() * 4];
    let mut log = Vec::new();
    let log_every = (hp.steps / hp.log_points.max(1) as u64).max(1);

    let snapshot = |q: &QTable, t: u64, eps: f64, log: &mut Vec<QlProgress>| {
        log.push(QlProgress {
            step: t,
            epsilon: eps,
            oracle_distance: reference.map(|r| q.max_norm_distance(r)),
        });
    };

    let mut s = State::default();
    for t in 0..hp.steps {
        let eps = linear_decay(hp.epsilon_start, hp.epsilon_end, hp.epsilon_decay_steps, t);
        let feas = feasible_actions(s, cfg).intersect(allowed);
        let a = if bernoulli(rng, eps) {
            pick_uniform(feas, rng)
        } else {
            q.greedy(s.index(cfg))
        };
        let out = step(s, a, cfg, rng).expect("masked selection is feasible");

        let si = s.index(cfg);
        let target = out.delivered as f64 + hp.gamma * q.max_value(out.next.index(cfg));
        let slot = si * 4 + a.index();
        let lr = libm::pow(1.0 + visits[slot] as f64, -hp.lr_exponent);
        visits[slot] += 1;
        let old = q.get(si, a);
        q.set(si, a, old + lr * (target - old));

        s = out.next;
        if (t + 1) % log_every == 0 {
            snapshot(&q, t + 1, eps, &mut log);
        }
    }
    if hp.steps == 0 || hp.steps % log_every != 0 {
        snapshot(&q, hp.steps, hp.epsilon_end, &mut log);
    }
    (q, log)
}

pub(crate) fn linear_decay(start: f64, end: f64, decay_steps: u64, t: u64) -> f64 {
    if decay_steps == 0 || t >= decay_steps {
        return end;
    }
    start + (end - start) * (t as f64 / decay_steps as f64)
}

/// Uniform choice among the (non-empty) action set.
pub(crate) fn pick_uniform(set: ActionSet, rng: &mut impl RngCore) -> ActionKind {
    let mut actions = [ActionKind::PassiveHarvest; 4];
    let mut n = 0;
    for a in set.iter() {
        actions[n] = a;
        n += 1;
    }
    debug_assert!(n > 0);
    actions[uniform_index(rng, n)]
}

/// Long-run averages of one seeded rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    /// Delivered packets per slot.
    pub throughput: f64,
    /// Dropped packets per slot.
    pub dropped: f64,
    /// Mean post-slot battery level.
    pub energy: f64,
}

/// Aggregate of [`evaluate_policy`] over its seed list.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub avg_throughput: f64,
    pub avg_dropped: f64,
    pub avg_energy: f64,
    pub slots: u64,
    pub per_seed: Vec<SeedMetrics>,
}

/// Simulates `horizon` slots from `(0, 0)` under the policy with its own
/// seeded generator.
pub fn simulate_policy(cfg: &EnvConfig, policy: &Policy, horizon: u64, seed: u64) -> SeedMetrics {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut s = State::default();
    let (mut delivered, mut dropped, mut energy) = (0u64, 0u64, 0u64);
    for _ in 0..horizon {
        let out = step(s, policy.action(s), cfg, &mut rng).expect("policy action is feasible");
        delivered += out.delivered as u64;
        dropped += out.dropped as u64;
        energy += out.next.energy as u64;
        s = out.next;
    }
    let slots = horizon as f64;
    SeedMetrics {
        seed,
        throughput: delivered as f64 / slots,
        dropped: dropped as f64 / slots,
        energy: energy as f64 / slots,
    }
}

/// Mean and per-seed long-run metrics of a policy over a seed list.
pub fn evaluate_policy(cfg: &EnvConfig, policy: &Policy, horizon: u64, seeds: &[u64]) -> Metrics {
    assert!(horizon >= 1, "horizon must be at least one slot");
    let per_seed: Vec<SeedMetrics> =
        seeds.iter().map(|&seed| simulate_policy(cfg, policy, horizon, seed)).collect();
    let n = per_seed.len().max(1) as f64;
    Metrics {
        avg_throughput: per_seed.iter().map(|m| m.throughput).sum::<f64>() / n,
        avg_dropped: per_seed.iter().map(|m| m.dropped).sum::<f64>() / n,
        avg_energy: per_seed.iter().map(|m| m.energy).sum::<f64>() / n,
        slots: horizon,
        per_seed,
    }
}

/// States reachable from `(0, 0)` under the policy, following every nonzero
/// kernel branch. Sorted by state index.
pub fn reachable_states(cfg: &EnvConfig, policy: &Policy) -> Vec<State> {
    let mut seen = vec![false; cfg.state_count()];
    let mut queue = vec![State::default()];
    seen[State::default().index(cfg)] = true;
    while let Some(s) = queue.pop() {
        for b in enumerate_kernel(s, policy.action(s), cfg).expect("policy action is feasible") {
            let i = b.next.index(cfg);
            if !seen[i] {
                seen[i] = true;
                queue.push(b.next);
            }
        }
    }
    (0..cfg.state_count())
        .filter(|&i| seen[i])
        .map(|i| State::from_index(i, cfg))
        .collect()
}

/// Exact long-run averages of a policy's Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMetrics {
    pub throughput: f64,
    pub dropped: f64,
    pub energy: f64,
    /// Stationary state distribution, indexed by state; zero (up to the
    /// power-iteration tolerance) on transient states.
    pub distribution: Vec<f64>,
}

/// Exact long-run metrics via the stationary distribution of the policy's
/// chain, computed by power iteration from the `(0, 0)` start.
///
/// This is the noise-free counterpart of [`evaluate_policy`], useful when a
/// comparison should not hinge on simulation error.
pub fn stationary_metrics(cfg: &EnvConfig, policy: &Policy) -> StationaryMetrics {
    let n = cfg.state_count();
    let mut transition = vec![0.0f64; n * n];
    let mut reward = vec![0.0f64; n];
    let mut dropped = vec![0.0f64; n];
    let mut energy = vec![0.0f64; n];
    for s in cfg.states() {
        let i = s.index(cfg);
        for b in enumerate_kernel(s, policy.action(s), cfg).expect("policy action is feasible") {
            transition[i * n + b.next.index(cfg)] += b.prob;
            reward[i] += b.prob * b.delivered as f64;
            dropped[i] += b.prob * b.dropped as f64;
            energy[i] += b.prob * b.next.energy as f64;
        }
    }

    let mut mu = vec![0.0f64; n];
    mu[State::default().index(cfg)] = 1.0;
    let mut next = vec![0.0f64; n];
    for _ in 0..200_000 {
        next.fill(0.0);
        for (i, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let row = &transition[i * n..(i + 1) * n];
            for (j, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    next[j] += m * p;
                }
            }
        }
        let shift =
            mu.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        core::mem::swap(&mut mu, &mut next);
        if shift < 1e-13 {
            break;
        }
    }

    let dot = |w: &[f64]| mu.iter().zip(w).map(|(m, v)| m * v).sum::<f64>();
    StationaryMetrics {
        throughput: dot(&reward),
        dropped: dot(&dropped),
        energy: dot(&energy),
        distribution: mu,
    }
}
