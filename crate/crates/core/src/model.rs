//! System model shared by every other module: parameters, the per-slot
//! reward `R(a) = ½·log₂(1 + γa)`, its derivative and inverse derivative,
//! and the lookahead distance function.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Arrival probabilities closer than this to 0 or 1 are rejected.
pub const PROB_EDGE: f64 = 1e-12;

/// Battery capacity, Bernoulli arrival probability, channel gain and
/// lookahead window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub battery_capacity: f64,
    pub arrival_prob: f64,
    pub channel_gain: f64,
    pub window: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            battery_capacity: 100.0,
            arrival_prob: 0.3,
            channel_gain: 0.5,
            window: 4,
        }
    }
}

impl SystemParams {
    pub fn new(battery_capacity: f64, arrival_prob: f64, channel_gain: f64, window: usize) -> Result<Self> {
        let params = Self {
            battery_capacity,
            arrival_prob,
            channel_gain,
            window,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.battery_capacity.is_finite() && self.battery_capacity > 0.0) {
            return Err(Error::InvalidParams(format!(
                "battery capacity must be positive, got {}",
                self.battery_capacity
            )));
        }
        if !(self.channel_gain.is_finite() && self.channel_gain > 0.0) {
            return Err(Error::InvalidParams(format!(
                "channel gain must be positive, got {}",
                self.channel_gain
            )));
        }
        let p = self.arrival_prob;
        if !(PROB_EDGE..=1.0 - PROB_EDGE).contains(&p) {
            return Err(Error::InvalidParams(format!(
                "arrival probability must lie in [{PROB_EDGE}, 1 - {PROB_EDGE}], got {p}"
            )));
        }
        Ok(())
    }

    pub fn with_window(self, window: usize) -> Self {
        Self { window, ..self }
    }

    pub fn with_capacity(self, battery_capacity: f64) -> Self {
        Self {
            battery_capacity,
            ..self
        }
    }

    pub fn with_prob(self, arrival_prob: f64) -> Self {
        Self { arrival_prob, ..self }
    }

    #[inline]
    pub fn reward(&self, a: f64) -> f64 {
        debug_assert!(a >= 0.0, "negative energy {a}");
        rate(a, self.channel_gain)
    }

    #[inline]
    pub fn reward_deriv(&self, a: f64) -> f64 {
        debug_assert!(a >= 0.0, "negative energy {a}");
        marginal(a, self.channel_gain)
    }

    /// `R'(0)`, the largest marginal rate.
    #[inline]
    pub fn max_marginal(&self) -> f64 {
        self.channel_gain / (2.0 * LN_2)
    }

    /// Inverse of `R'` clamped to `[0, ∞)`; callers guarantee `0 < y ≤ R'(0)`.
    #[inline]
    pub(crate) fn inv_marginal(&self, y: f64) -> f64 {
        let g = self.channel_gain;
        ((g / (2.0 * LN_2 * y) - 1.0) / g).max(0.0)
    }
}

#[inline]
fn rate(a: f64, gain: f64) -> f64 {
    0.5 * (gain * a).ln_1p() / LN_2
}

#[inline]
pub(crate) fn marginal(a: f64, gain: f64) -> f64 {
    gain / (2.0 * LN_2 * (1.0 + gain * a))
}

/// Instantaneous rate `½·log₂(1 + γa)` in bits per slot.
pub fn reward(a: f64, gain: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(domain(format!("energy must be nonnegative, got {a}")));
    }
    Ok(rate(a, gain))
}

/// `R'(a) = γ / (2·ln2·(1 + γa))`.
pub fn reward_deriv(a: f64, gain: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(domain(format!("energy must be nonnegative, got {a}")));
    }
    Ok(marginal(a, gain))
}

/// The unique `a ≥ 0` with `R'(a) = y`. Fails unless `0 < y ≤ R'(0)`.
pub fn reward_deriv_inv(y: f64, gain: f64) -> Result<f64> {
    let max = gain / (2.0 * LN_2);
    if !(y > 0.0 && y <= max) {
        return Err(Error::OutOfRange { y, max });
    }
    Ok(((gain / (2.0 * LN_2 * y) - 1.0) / gain).max(0.0))
}

/// Energy arrivals visible in the lookahead window; entry `i` is `e_{τ+i+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LookaheadWindow {
    arrivals: Vec<f64>,
}

impl LookaheadWindow {
    /// Builds a window, clipping every arrival at `capacity`.
    pub fn new(arrivals: impl IntoIterator<Item = f64>, capacity: f64) -> Result<Self> {
        let arrivals = arrivals
            .into_iter()
            .map(|e| {
                if e.is_nan() || e < 0.0 {
                    Err(domain(format!("arrival must be nonnegative, got {e}")))
                } else {
                    Ok(e.min(capacity))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { arrivals })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            arrivals: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.arrivals
    }

    pub fn total(&self) -> f64 {
        self.arrivals.iter().sum()
    }

    /// Slots until the earliest visible arrival, or 0 when the window is empty of energy.
    pub fn distance(&self) -> usize {
        distance(&self.arrivals)
    }
}

/// `max{1 ≤ i ≤ w+1 : e_1 + … + e_{i-1} = 0} mod (w+1)`.
pub fn distance(window: &[f64]) -> usize {
    window.iter().position(|&e| e > 0.0).map_or(0, |i| i + 1)
}

/// Battery level plus the visible window: the decision state of every policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub battery: f64,
    pub window: LookaheadWindow,
}

impl PolicyState {
    pub fn new(battery: f64, window: LookaheadWindow, capacity: f64) -> Result<Self> {
        if !(battery >= 0.0 && battery <= capacity) {
            return Err(domain(format!("battery {battery} outside [0, {capacity}]")));
        }
        Ok(Self { battery, window })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: f64 = 0.5;

    #[test]
    fn reward_values() {
        assert_eq!(reward(0.0, G).unwrap(), 0.0);
        assert!((reward(6.0, G).unwrap() - 1.0).abs() < 1e-15);
        // ½·log₂(51)
        assert!((reward(100.0, G).unwrap() - 2.836_212_670).abs() < 1e-4);
        assert!(reward(-1.0, G).is_err());
    }

    #[test]
    fn deriv_values_and_finite_difference() {
        assert!((reward_deriv(0.0, G).unwrap() - 0.360_674).abs() < 1e-6);
        assert!(reward_deriv(1e12, G).unwrap() < 1e-11);
        let (a, h) = (3.0, 1e-5);
        let fd = (reward(a + h, G).unwrap() - reward(a - h, G).unwrap()) / (2.0 * h);
        assert!((reward_deriv(a, G).unwrap() - fd).abs() < 1e-6);
        assert!(reward_deriv(-0.1, G).is_err());
    }

    fn bisect_inverse(y: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if reward_deriv(mid, G).unwrap() > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverse_values() {
        let top = G / (2.0 * LN_2);
        assert_eq!(reward_deriv_inv(top, G).unwrap(), 0.0);
        let a = reward_deriv_inv(0.18, G).unwrap();
        assert!((a - bisect_inverse(0.18)).abs() < 1e-9);
        assert!((a - 2.00746).abs() < 1e-4);
        for a in [0.1, 1.0, 17.0, 99.0] {
            let back = reward_deriv_inv(reward_deriv(a, G).unwrap(), G).unwrap();
            assert!((back - a).abs() < 1e-12, "{a} -> {back}");
        }
        assert!(matches!(reward_deriv_inv(0.0, G), Err(Error::OutOfRange { .. })));
        assert!(reward_deriv_inv(top * 1.0001, G).is_err());
    }

    #[test]
    fn distance_examples() {
        let b = 100.0;
        assert_eq!(distance(&[0.0, 0.0, b]), 3);
        assert_eq!(distance(&[b, 0.0, 0.0]), 1);
        assert_eq!(distance(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(distance(&[]), 0);
    }

    /// Literal transcription of the max/mod definition.
    fn distance_by_definition(e: &[f64]) -> usize {
        let w = e.len();
        let best = (1..=w + 1)
            .filter(|&i| e[..i - 1].iter().sum::<f64>() == 0.0)
            .max()
            .unwrap();
        best % (w + 1)
    }

    #[test]
    fn distance_matches_definition_on_all_binary_windows() {
        for w in 0..=12usize {
            for mask in 0u32..(1 << w) {
                let e: Vec<f64> = (0..w).map(|i| if mask >> i & 1 == 1 { 100.0 } else { 0.0 }).collect();
                assert_eq!(distance(&e), distance_by_definition(&e), "w={w} mask={mask:b}");
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(100.0, 0.3, 0.5, 4).is_ok());
        assert!(SystemParams::new(0.0, 0.3, 0.5, 4).is_err());
        assert!(SystemParams::new(100.0, 0.0, 0.5, 4).is_err());
        assert!(SystemParams::new(100.0, 1.0, 0.5, 4).is_err());
        assert!(SystemParams::new(100.0, 1e-13, 0.5, 4).is_err());
        assert!(SystemParams::new(100.0, 0.3, -0.5, 4).is_err());
    }

    #[test]
    fn window_clips_at_capacity() {
        let w = LookaheadWindow::new([250.0, 3.0], 100.0).unwrap();
        assert_eq!(w.as_slice(), &[100.0, 3.0]);
        assert!(LookaheadWindow::new([-1.0], 100.0).is_err());
        assert!(PolicyState::new(101.0, w, 100.0).is_err());
    }

    proptest! {
        #[test]
        fn reward_strictly_concave(a in 0.0f64..200.0, d in 1e-3f64..200.0, lam in 0.01f64..0.99) {
            let b = a + d;
            let mid = reward(lam * a + (1.0 - lam) * b, G).unwrap();
            let chord = lam * reward(a, G).unwrap() + (1.0 - lam) * reward(b, G).unwrap();
            prop_assert!(mid > chord - 1e-12);
        }

        #[test]
        fn deriv_inverse_round_trip(a in 0.0f64..1000.0, g in 0.01f64..10.0) {
            let y = reward_deriv(a, g).unwrap();
            let back = reward_deriv_inv(y, g).unwrap();
            prop_assert!((back - a).abs() < 1e-10 * (1.0 + a));
            prop_assert!(reward_deriv(a + 1e-3, g).unwrap() < y);
        }
    }
}
