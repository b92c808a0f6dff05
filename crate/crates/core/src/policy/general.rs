use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::model::SystemParams;
use crate::solver::{solve_online_w0, xi_star_with_bounds, DEFAULT_KKT_TOL, DEFAULT_N_CAP};

use super::offline::offline_allocate;
use super::{ArrivalModel, Policy};

/// Number of log-spaced table levels.
pub const OMEGA_LEVELS: usize = 256;

/// Largest tabulated level as a multiple of `B`: the low-arrival branch sees
/// at most `b + Σ window < B + B/2`.
pub const OMEGA_SPAN: f64 = 1.5;

/// Smallest table level as a fraction of `B`.
const OMEGA_FLOOR: f64 = 1e-4;

/// `ω̲(x) = ξ*_1` for capacity `x`, tabulated on log-spaced levels in
/// `(0, 1.5·B]` and interpolated linearly (with `ω̲(0) = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaTable {
    levels: Vec<f64>,
    values: Vec<f64>,
    top: f64,
    capacity: f64,
}

impl OmegaTable {
    /// Tabulates `ω̲` for `params` with the arrival probability replaced by `prob`.
    pub fn build(params: &SystemParams, prob: f64) -> Result<Self> {
        Self::with_levels(params, prob, OMEGA_LEVELS)
    }

    pub fn with_levels(params: &SystemParams, prob: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(domain("omega table needs at least two levels"));
        }
        let base = params.with_prob(prob);
        base.validate()?;
        let cap = params.battery_capacity;
        let top = OMEGA_SPAN * cap;
        let mut levels = vec![0.0];
        let ratio = OMEGA_FLOOR.powf(1.0 / (count - 1) as f64);
        levels.extend((0..count).rev().map(|i| top * ratio.powi(i as i32)));
        *levels.last_mut().unwrap() = top;
        let values = levels
            .par_iter()
            .map(|&x| {
                if x == 0.0 {
                    Ok(0.0)
                } else {
                    first_entry(&base.with_capacity(x))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            levels,
            values,
            top,
            capacity: cap,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interpolated `ω̲(x)` for `0 ≤ x ≤ 1.5·B`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x <= self.top * (1.0 + 1e-12)) {
            return Err(domain(format!("level {x} outside [0, {}]", self.top)));
        }
        let x = x.min(self.top);
        let hi = self.levels.partition_point(|&l| l < x).min(self.levels.len() - 1);
        if hi == 0 {
            return Ok(self.values[0]);
        }
        let (x0, x1) = (self.levels[hi - 1], self.levels[hi]);
        let (y0, y1) = (self.values[hi - 1], self.values[hi]);
        Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }
}

/// `ω̲(x)` computed directly, for `params` whose arrival probability is
/// already the MCR. Accepts `0 ≤ x ≤ 1.5·B`.
pub fn omega_lower(params: &SystemParams, x: f64) -> Result<f64> {
    params.validate()?;
    let top = OMEGA_SPAN * params.battery_capacity;
    if !(x >= 0.0 && x <= top) {
        return Err(domain(format!("level {x} outside [0, {top}]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    first_entry(&params.with_capacity(x))
}

fn first_entry(params: &SystemParams) -> Result<f64> {
    let cap = params.battery_capacity;
    let first = if params.window == 0 {
        solve_online_w0(params, DEFAULT_KKT_TOL)?.values[0]
    } else {
        let (xi, _) = xi_star_with_bounds(params, 1e-7 * cap, Some(1), DEFAULT_N_CAP)?;
        xi.values[0]
    };
    Ok(first.min(cap))
}

/// Extension of the Bernoulli-optimal policy to general arrivals: plan
/// offline when the window holds at least `B/2`, otherwise spend
/// `min{ω̲(b + Σ window), b}` with `ω̲` built for `p = MCR`.
#[derive(Debug, Clone)]
pub struct GeneralPolicy {
    params: SystemParams,
    table: Arc<OmegaTable>,
    threshold: f64,
}

impl GeneralPolicy {
    pub fn new(params: SystemParams, model: &ArrivalModel) -> Result<Self> {
        let prob = model.mcr(params.battery_capacity)?;
        let table = OmegaTable::build(&params, prob)?;
        Self::with_table(params, Arc::new(table))
    }

    pub fn with_table(params: SystemParams, table: Arc<OmegaTable>) -> Result<Self> {
        params.validate()?;
        if table.capacity != params.battery_capacity {
            return Err(domain("omega table was built for a different capacity"));
        }
        Ok(Self {
            threshold: params.battery_capacity / 2.0,
            params,
            table,
        })
    }

    pub fn table(&self) -> &OmegaTable {
        &self.table
    }
}

impl Policy for GeneralPolicy {
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64> {
        let seen: f64 = window.iter().sum();
        if seen >= self.threshold {
            return offline_allocate(&self.params, battery, window);
        }
        Ok(self.table.eval(battery + seen)?.min(battery))
    }

    fn window(&self) -> usize {
        self.params.window
    }
}
