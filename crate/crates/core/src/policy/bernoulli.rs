use crate::error::{domain, Result};
use crate::model::{distance, SystemParams};
use crate::solver::{default_eps, solve_online_w0, xi_star, BoundKind, XiSequence, DEFAULT_KKT_TOL};

use super::Policy;

/// The optimal stationary policy for Bernoulli arrivals: spend `ξ*_j` in the
/// `j`-th quiet slot after a full charge, and once an arrival is visible `d`
/// slots ahead spread the battery uniformly over those `d` slots.
#[derive(Debug, Clone)]
pub struct BernoulliPolicy {
    params: SystemParams,
    xi: Vec<f64>,
    /// Uniform-stage slots left before the visible arrival lands.
    pending: usize,
    /// Index into `xi` of the next quiet-slot action.
    quiet: usize,
}

impl BernoulliPolicy {
    /// Uses `xi` as the quiet-period schedule; entries past its end are 0.
    pub fn new(params: SystemParams, xi: &XiSequence) -> Result<Self> {
        params.validate()?;
        if xi.kind != BoundKind::Limit {
            return Err(domain("policy needs a limit sequence"));
        }
        if xi.params.window != params.window {
            return Err(domain("sequence was computed for a different window"));
        }
        Ok(Self {
            params,
            xi: xi.values.clone(),
            pending: 0,
            quiet: 0,
        })
    }

    /// Solves for the schedule at the default tolerance.
    pub fn solve(params: SystemParams) -> Result<Self> {
        let xi = if params.window == 0 {
            solve_online_w0(&params, DEFAULT_KKT_TOL)?
        } else {
            xi_star(&params, default_eps(&params))?
        };
        Self::new(params, &xi)
    }

    pub fn schedule(&self) -> &[f64] {
        &self.xi
    }
}

impl Policy for BernoulliPolicy {
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64> {
        let cap = self.params.battery_capacity;
        if window.len() != self.params.window {
            return Err(domain(format!(
                "expected {} window entries, got {}",
                self.params.window,
                window.len()
            )));
        }
        if let Some(e) = window.iter().find(|e| **e != 0.0 && **e != cap) {
            return Err(domain(format!(
                "arrival {e} is neither 0 nor B; use the general policy"
            )));
        }
        // Without lookahead a full battery is the only sign of a new cycle.
        if self.params.window == 0 && battery >= cap {
            self.quiet = 0;
        }
        if self.pending == 0 {
            let d = distance(window);
            if d > 0 {
                self.pending = d;
                self.quiet = 0;
            }
        }
        if self.pending > 0 {
            let a = battery / self.pending as f64;
            self.pending -= 1;
            return Ok(a);
        }
        let a = self.xi.get(self.quiet).copied().unwrap_or(0.0).min(battery);
        self.quiet += 1;
        Ok(a)
    }

    fn reset(&mut self) {
        self.pending = 0;
        self.quiet = 0;
    }

    fn window(&self) -> usize {
        self.params.window
    }
}
