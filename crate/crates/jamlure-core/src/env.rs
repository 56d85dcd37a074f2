//! The slotted MDP: an energy-harvesting IoT device with a packet queue,
//! facing a reactive jammer that fires (with probability `p_attack`) whenever
//! it detects a transmission, fake or real.
//!
//! A slot applies, in this fixed order: action energy cost, the attack draw
//! (transmitting actions only), action resolution, packet arrival with
//! overflow drops, battery clipping. [`step`] samples one slot; the equally
//! authoritative [`enumerate_kernel`] lists every outcome branch with its
//! exact probability. The two are implemented independently on purpose, so
//! statistical agreement between them is a meaningful check of both.

use alloc::vec::Vec;
use core::fmt;
use rand_core::RngCore;

use crate::sample::bernoulli;

/// Battery level and queue length: the full observable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct State {
    /// Stored energy in units, `0..=e_max`.
    pub energy: usize,
    /// Buffered packets, `0..=d_max`.
    pub queue: usize,
}

impl State {
    pub fn new(energy: usize, queue: usize) -> Self {
        State { energy, queue }
    }

    /// Dense row-major index: `energy * (d_max + 1) + queue`.
    pub fn index(&self, cfg: &EnvConfig) -> usize {
        self.energy * (cfg.d_max + 1) + self.queue
    }

    pub fn from_index(i: usize, cfg: &EnvConfig) -> Self {
        State { energy: i / (cfg.d_max + 1), queue: i % (cfg.d_max + 1) }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(e={}, d={})", self.energy, self.queue)
    }
}

/// The four device operation modes.
///
/// The declaration order doubles as the tie-break order everywhere a greedy
/// argmax has to pick among equal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionKind {
    /// Listen and harvest ambient energy; never detected by the jammer.
    PassiveHarvest,
    /// Spend `cost_active` to transmit up to `tx_packets` real packets.
    ActiveTransmit,
    /// Fake transmission to lure the jammer, then harvest the jamming burst.
    DeceiveHarvest,
    /// Fake transmission, then backscatter one packet on the jamming burst.
    DeceiveBackscatter,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::PassiveHarvest,
        ActionKind::ActiveTransmit,
        ActionKind::DeceiveHarvest,
        ActionKind::DeceiveBackscatter,
    ];

    pub fn index(self) -> usize {
        match self {
            ActionKind::PassiveHarvest => 0,
            ActionKind::ActiveTransmit => 1,
            ActionKind::DeceiveHarvest => 2,
            ActionKind::DeceiveBackscatter => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<ActionKind> {
        ActionKind::ALL.get(i).copied()
    }

    /// Short stable code used in text formats: `ph`, `at`, `dh`, `db`.
    pub fn code(self) -> &'static str {
        match self {
            ActionKind::PassiveHarvest => "ph",
            ActionKind::ActiveTransmit => "at",
            ActionKind::DeceiveHarvest => "dh",
            ActionKind::DeceiveBackscatter => "db",
        }
    }

    pub fn from_code(code: &str) -> Option<ActionKind> {
        ActionKind::ALL.iter().copied().find(|a| a.code() == code)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A set of actions as a 4-bit mask; iteration follows the fixed action order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn all() -> ActionSet {
        ActionSet(0b1111)
    }

    pub fn from_actions(actions: &[ActionKind]) -> ActionSet {
        let mut set = ActionSet::EMPTY;
        for &a in actions {
            set.insert(a);
        }
        set
    }

    pub fn insert(&mut self, a: ActionKind) {
        self.0 |= 1 << a.index();
    }

    pub fn contains(self, a: ActionKind) -> bool {
        self.0 & (1 << a.index()) != 0
    }

    pub fn intersect(self, other: ActionSet) -> ActionSet {
        ActionSet(self.0 & other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Lowest action in the fixed order, if any.
    pub fn first(self) -> Option<ActionKind> {
        self.iter().next()
    }

    pub fn iter(self) -> impl Iterator<Item = ActionKind> {
        ActionKind::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<ActionKind> for ActionSet {
    fn from_iter<I: IntoIterator<Item = ActionKind>>(iter: I) -> Self {
        let mut set = ActionSet::EMPTY;
        for a in iter {
            set.insert(a);
        }
        set
    }
}

/// Capacities, costs, gains, and event probabilities of the game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Battery capacity in energy units.
    pub e_max: usize,
    /// Queue capacity in packets.
    pub d_max: usize,
    /// Energy cost of a fake transmission.
    pub cost_fake: usize,
    /// Energy cost of an actual transmission.
    pub cost_active: usize,
    /// Packets delivered by one un-jammed active transmission.
    pub tx_packets: usize,
    /// Energy harvested from one jamming burst.
    pub harvest_jam: usize,
    /// Packets delivered by backscattering one jamming burst.
    pub bs_packets: usize,
    /// Probability the jammer fires on a detected transmission.
    pub p_attack: f64,
    /// Probability that `arrival_batch` packets arrive in a slot.
    pub p_arrival: f64,
    /// Packets per arrival event.
    pub arrival_batch: usize,
    /// Probability of harvesting `ambient_gain` while listening passively.
    pub p_ambient: f64,
    /// Energy units per ambient-harvest event.
    pub ambient_gain: usize,
    /// Physical size of one energy unit in microjoules. Documentation only;
    /// the dynamics are unit-free.
    pub energy_unit_uj: f64,
    /// Physical packet size in bits. Documentation only.
    pub packet_bits: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            e_max: 10,
            d_max: 10,
            cost_fake: 1,
            cost_active: 3,
            tx_packets: 3,
            harvest_jam: 3,
            bs_packets: 1,
            p_attack: 0.6,
            p_arrival: 0.5,
            arrival_batch: 2,
            p_ambient: 0.3,
            ambient_gain: 1,
            energy_unit_uj: 60.0,
            packet_bits: 300,
        }
    }
}

impl EnvConfig {
    /// Number of states, `(e_max + 1) * (d_max + 1)`.
    pub fn state_count(&self) -> usize {
        (self.e_max + 1) * (self.d_max + 1)
    }

    /// All states in index order.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.state_count()).map(|i| State::from_index(i, self))
    }
}

/// First configuration violation found, identifying the offending field.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    ZeroCapacity { field: &'static str },
    CostExceedsCapacity { field: &'static str, cost: usize, e_max: usize },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::ProbabilityOutOfRange { field, value } => {
                write!(f, "{field} = {value} is not a probability in [0, 1]")
            }
            ConfigError::ZeroCapacity { field } => {
                write!(f, "{field} must be at least 1")
            }
            ConfigError::CostExceedsCapacity { field, cost, e_max } => {
                write!(
                    f,
                    "{field} = {cost} exceeds e_max = {e_max}; the action could never be taken"
                )
            }
        }
    }
}

impl core::error::Error for ConfigError {}

/// Checks every [`EnvConfig`] invariant and returns the config unchanged.
pub fn validate_config(cfg: EnvConfig) -> Result<EnvConfig, ConfigError> {
    for (field, value) in [
        ("p_attack", cfg.p_attack),
        ("p_arrival", cfg.p_arrival),
        ("p_ambient", cfg.p_ambient),
    ] {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(ConfigError::ProbabilityOutOfRange { field, value });
        }
    }
    for (field, value) in [("e_max", cfg.e_max), ("d_max", cfg.d_max)] {
        if value == 0 {
            return Err(ConfigError::ZeroCapacity { field });
        }
    }
    for (field, cost) in [("cost_active", cfg.cost_active), ("cost_fake", cfg.cost_fake)] {
        if cost > cfg.e_max {
            return Err(ConfigError::CostExceedsCapacity { field, cost, e_max: cfg.e_max });
        }
    }
    Ok(cfg)
}

/// Actions the device can take in state `s`.
///
/// Passive harvesting is always possible. Transmitting for real needs
/// `cost_active` energy and a non-empty queue; faking needs `cost_fake`
/// energy, and the backscatter variant additionally a packet to send.
pub fn feasible_actions(s: State, cfg: &EnvConfig) -> ActionSet {
    let mut set = ActionSet::EMPTY;
    set.insert(ActionKind::PassiveHarvest);
    if s.energy >= cfg.cost_active && s.queue >= 1 {
        set.insert(ActionKind::ActiveTransmit);
    }
    if s.energy >= cfg.cost_fake {
        set.insert(ActionKind::DeceiveHarvest);
        if s.queue >= 1 {
            set.insert(ActionKind::DeceiveBackscatter);
        }
    }
    set
}

/// Result of one sampled slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: State,
    /// Packets delivered to the gateway this slot; the per-slot reward.
    pub delivered: usize,
    /// Packets lost this slot: jam-drops plus queue-overflow drops.
    pub dropped: usize,
    /// The jammer fired.
    pub attacked: bool,
    /// An arrival batch landed.
    pub arrived: bool,
    /// Ambient energy was harvested.
    pub ambient: bool,
}

/// Action was not in `feasible_actions`; signals an agent bug.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfeasibleAction {
    pub state: State,
    pub action: ActionKind,
}

impl fmt::Display for InfeasibleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "action {} is not feasible in state {}", self.action, self.state)
    }
}

impl core::error::Error for InfeasibleAction {}

fn check_feasible(s: State, a: ActionKind, cfg: &EnvConfig) -> Result<(), InfeasibleAction> {
    if feasible_actions(s, cfg).contains(a) {
        Ok(())
    } else {
        Err(InfeasibleAction { state: s, action: a })
    }
}

/// Samples one slot of the game.
///
/// Draw order is fixed and part of the contract: the attack draw (only for
/// `ActiveTransmit`, `DeceiveHarvest`, `DeceiveBackscatter`), then the
/// ambient draw (only for `PassiveHarvest` and the un-attacked deception
/// fallback), then the arrival draw. Each draw consumes exactly one `u64`
/// from `rng`, so identical seeds give identical trajectories.
///
/// The environment never substitutes another action: an infeasible request
/// is an error.
pub fn step(
    s: State,
    a: ActionKind,
    cfg: &EnvConfig,
    rng: &mut impl RngCore,
) -> Result<StepOutcome, InfeasibleAction> {
    check_feasible(s, a, cfg)?;

    let mut energy = s.energy;
    let mut queue = s.queue;
    let mut delivered = 0;
    let mut dropped = 0;
    let mut attacked = false;
    let mut ambient = false;

    match a {
        ActionKind::PassiveHarvest => {
            ambient = bernoulli(rng, cfg.p_ambient);
            if ambient {
                energy += cfg.ambient_gain;
            }
        }
        ActionKind::ActiveTransmit => {
            energy -= cfg.cost_active;
            attacked = bernoulli(rng, cfg.p_attack);
            let moved = cfg.tx_packets.min(queue);
            queue -= moved;
            if attacked {
                dropped += moved;
            } else {
                delivered += moved;
            }
        }
        ActionKind::DeceiveHarvest => {
            energy -= cfg.cost_fake;
            attacked = bernoulli(rng, cfg.p_attack);
            if attacked {
                energy += cfg.harvest_jam;
            } else {
                ambient = bernoulli(rng, cfg.p_ambient);
                if ambient {
                    energy += cfg.ambient_gain;
                }
            }
        }
        ActionKind::DeceiveBackscatter => {
            energy -= cfg.cost_fake;
            attacked = bernoulli(rng, cfg.p_attack);
            if attacked {
                let moved = cfg.bs_packets.min(queue);
                queue -= moved;
                delivered += moved;
            } else {
                ambient = bernoulli(rng, cfg.p_ambient);
                if ambient {
                    energy += cfg.ambient_gain;
                }
            }
        }
    }

    let arrived = bernoulli(rng, cfg.p_arrival);
    if arrived {
        queue += cfg.arrival_batch;
        if queue > cfg.d_max {
            dropped += queue - cfg.d_max;
            queue = cfg.d_max;
        }
    }
    energy = energy.min(cfg.e_max);

    Ok(StepOutcome { next: State::new(energy, queue), delivered, dropped, attacked, arrived, ambient })
}

/// One outcome branch of the exact transition kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBranch {
    pub prob: f64,
    pub next: State,
    pub delivered: usize,
    pub dropped: usize,
}

/// Exact transition kernel of `(s, a)`: every outcome branch with its
/// probability.
///
/// Branches over the attack, ambient, and arrival events (as each applies to
/// the action) are enumerated in a fixed order and merged when they agree on
/// `(next, delivered, dropped)`, so at most 8 rows come back and their
/// probabilities sum to 1. Zero-probability branches are omitted.
///
/// Implemented independently of [`step`]; the two are cross-checked
/// statistically in the test suite.
pub fn enumerate_kernel(
    s: State,
    a: ActionKind,
    cfg: &EnvConfig,
) -> Result<Vec<KernelBranch>, InfeasibleAction> {
    check_feasible(s, a, cfg)?;

    // (prob, attacked, ambient, arrival) event combinations for this action.
    let mut combos: Vec<(f64, bool, bool, bool)> = Vec::with_capacity(8);
    let arrivals = [(true, cfg.p_arrival), (false, 1.0 - cfg.p_arrival)];
    let ambients = [(true, cfg.p_ambient), (false, 1.0 - cfg.p_ambient)];
    match a {
        ActionKind::PassiveHarvest => {
            for (amb, p_amb) in ambients {
                for (arr, p_arr) in arrivals {
                    combos.push((p_amb * p_arr, false, amb, arr));
                }
            }
        }
        ActionKind::ActiveTransmit => {
            for (atk, p_atk) in [(true, cfg.p_attack), (false, 1.0 - cfg.p_attack)] {
                for (arr, p_arr) in arrivals {
                    combos.push((p_atk * p_arr, atk, false, arr));
                }
            }
        }
        ActionKind::DeceiveHarvest | ActionKind::DeceiveBackscatter => {
            for (arr, p_arr) in arrivals {
                combos.push((cfg.p_attack * p_arr, true, false, arr));
            }
            for (amb, p_amb) in ambients {
                for (arr, p_arr) in arrivals {
                    combos.push(((1.0 - cfg.p_attack) * p_amb * p_arr, false, amb, arr));
                }
            }
        }
    }

    let mut branches: Vec<KernelBranch> = Vec::with_capacity(combos.len());
    for (prob, attacked, ambient, arrived) in combos {
        if prob <= 0.0 {
            continue;
        }
        let gain = if ambient { cfg.ambient_gain } else { 0 };
        let (cost, jam_gain, sent, is_delivery) = match a {
            ActionKind::PassiveHarvest => (0, 0, 0, false),
            ActionKind::ActiveTransmit => (cfg.cost_active, 0, cfg.tx_packets.min(s.queue), !attacked),
            ActionKind::DeceiveHarvest => {
                (cfg.cost_fake, if attacked { cfg.harvest_jam } else { 0 }, 0, false)
            }
            ActionKind::DeceiveBackscatter => {
                (cfg.cost_fake, 0, if attacked { cfg.bs_packets.min(s.queue) } else { 0 }, true)
            }
        };
        let delivered = if is_delivery { sent } else { 0 };
        let mut dropped = sent - delivered;
        let mut queue = s.queue - sent;
        if arrived {
            queue += cfg.arrival_batch;
            if queue > cfg.d_max {
                dropped += queue - cfg.d_max;
                queue = cfg.d_max;
            }
        }
        let energy = (s.energy - cost + jam_gain + gain).min(cfg.e_max);
        let next = State::new(energy, queue);

        match branches
            .iter_mut()
            .find(|b| b.next == next && b.delivered == delivered && b.dropped == dropped)
        {
            Some(b) => b.prob += prob,
            None => branches.push(KernelBranch { prob, next, delivered, dropped }),
        }
    }
    Ok(branches)
}
