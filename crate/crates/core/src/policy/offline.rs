//! Receding-horizon offline allocation over the current slot plus the
//! lookahead window.
//!
//! With cumulative consumption `C_t = a_1 + … + a_t`, energy causality reads
//! `C_t ≤ U_t = b + e_1 + … + e_{t−1}` and avoiding battery overflow reads
//! `C_t ≥ L_t = U_{t+1} − B`. Draining the battery by the end pins
//! `C_H = U_H`. The concave optimum is the taut string through this tunnel,
//! and only its first segment is needed.

use crate::error::{domain, Result};
use crate::model::SystemParams;

use super::Policy;

/// First action of the optimal allocation of `battery` plus the known
/// arrivals `window` over `window.len() + 1` slots.
pub fn offline_allocate(params: &SystemParams, battery: f64, window: &[f64]) -> Result<f64> {
    let cap = params.battery_capacity;
    if !(battery >= 0.0 && battery <= cap * (1.0 + 1e-12)) {
        return Err(domain(format!("battery {battery} outside [0, {cap}]")));
    }
    if let Some(e) = window.iter().find(|e| !(**e >= 0.0)) {
        return Err(domain(format!("arrival must be nonnegative, got {e}")));
    }
    Ok(first_segment_slope(cap, battery.min(cap), window))
}

fn first_segment_slope(cap: f64, battery: f64, window: &[f64]) -> f64 {
    let horizon = window.len() + 1;
    // upper[t-1] = U_t
    let mut upper = Vec::with_capacity(horizon);
    let mut acc = battery;
    upper.push(acc);
    for &e in window {
        acc += e.min(cap);
        upper.push(acc);
    }
    let lower = |t: usize| -> f64 {
        if t == horizon {
            upper[horizon - 1]
        } else {
            (upper[t] - cap).max(0.0)
        }
    };

    let mut hi = f64::INFINITY;
    let mut lo = f64::NEG_INFINITY;
    for t in 1..=horizon {
        let tf = t as f64;
        let u = upper[t - 1] / tf;
        let l = lower(t) / tf;
        if u < lo {
            return lo;
        }
        if l > hi {
            return hi;
        }
        hi = hi.min(u);
        lo = lo.max(l);
    }
    // The final point is pinned, so both slopes agree there.
    hi.min(upper[horizon - 1] / horizon as f64).max(0.0)
}

/// The optimal offline policy over the visible horizon, re-planned every slot.
#[derive(Debug, Clone)]
pub struct OfflinePolicy {
    params: SystemParams,
}

impl OfflinePolicy {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl Policy for OfflinePolicy {
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64> {
        offline_allocate(&self.params, battery, window)
    }

    fn window(&self) -> usize {
        self.params.window
    }
}
