//! Small sampling helpers over a raw [`RngCore`].
//!
//! Each helper consumes exactly one `next_u64` draw, so a scripted RNG can
//! drive the environment through a chosen outcome branch in tests.

use rand_core::RngCore;

/// One uniform draw in [0, 1) with 53-bit resolution.
pub(crate) fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    // 2^-53; the top 53 bits of the draw give a dyadic rational in [0, 1).
    (rng.next_u64() >> 11) as f64 * 1.110_223_024_625_156_5e-16
}

/// Bernoulli(p) event draw. `p <= 0` never fires, `p >= 1` always fires.
pub(crate) fn bernoulli(rng: &mut impl RngCore, p: f64) -> bool {
    uniform_f64(rng) < p
}

/// Uniform index in `0..n` via a widening multiply of one draw.
///
/// The bias relative to exact uniformity is below `n * 2^-64`, far beneath
/// anything the statistical tests here can resolve.
pub(crate) fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}
