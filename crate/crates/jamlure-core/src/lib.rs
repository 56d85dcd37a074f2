//! Core model of a slotted anti-jamming game: an energy-harvesting IoT device
//! facing a reactive jammer it can lure with fake transmissions, then either
//! harvest the jamming burst or backscatter data on it.
//!
//! The crate is `no_std` (with `alloc`) and splits into:
//!
//! * [`env`]: the finite MDP. State, actions, config, a sampled single-slot
//!   step, and exact enumeration of the transition kernel.
//! * [`plan`]: value iteration and tabular Q-learning over that kernel, plus
//!   seeded policy evaluation.
//! * [`nn`]: a small dense network with backprop and Adam, used as the
//!   Q-function approximator.
//! * [`drl`]: DQN with experience replay and a target network, organized as
//!   an actor/learner pair exchanging weight snapshots at flush boundaries.
//! * [`strategy`]: the comparison strategies (full action set, deception
//!   variants, no deception) behind one policy-building entry point.
//!
//! Everything is deterministic given a seed: random draws come from a caller
//! supplied [`rand_core::RngCore`] and follow documented draw orders.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod drl;
pub mod env;
pub mod nn;
pub mod plan;
mod sample;
pub mod strategy;
