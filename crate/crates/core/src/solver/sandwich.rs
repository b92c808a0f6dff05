use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::SystemParams;

use super::online::{solve_w0_lower, solve_w0_upper};
use super::shooting::{solve_lower, solve_upper};
use super::throughput::{stationary_residual, throughput_lower_n, throughput_upper_n};
use super::{BoundKind, ThroughputEstimate, XiSequence, DEFAULT_KKT_TOL, DEFAULT_N_CAP, DEFAULT_XI_EPS_REL};

/// Rounding noise tolerated when checking that the bounds are ordered.
const CROSSING_SLACK: f64 = 1e-12;

/// Both finite-horizon optima for one horizon `N`, with their throughputs.
#[derive(Debug, Clone, Serialize)]
pub struct Sandwich {
    pub horizon: usize,
    /// Lies above the optimal sequence; its throughput is a lower bound.
    pub lower: XiSequence,
    /// Lies below the optimal sequence; its throughput is an upper bound.
    pub upper: XiSequence,
    pub lower_throughput: ThroughputEstimate,
    pub upper_throughput: ThroughputEstimate,
    /// `p(1−p)^{N+w} R'(0) (B − Σ ξ̄)`, an a-priori bound on the throughput gap.
    pub gap_bound: f64,
}

impl Sandwich {
    pub fn throughput_gap(&self) -> f64 {
        self.upper_throughput.value - self.lower_throughput.value
    }

    /// Certified midpoint of the optimal throughput.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper_throughput.value + self.lower_throughput.value)
    }
}

/// Solves both bound programs at horizon `N` (either window regime).
pub fn sandwich_at(params: &SystemParams, horizon: usize, tol: f64) -> Result<Sandwich> {
    let (lower, upper) = if params.window == 0 {
        (
            solve_w0_lower(params, horizon, tol)?,
            solve_w0_upper(params, horizon, tol)?,
        )
    } else {
        (solve_lower(params, horizon, tol)?, solve_upper(params, horizon, tol)?)
    };
    let lower_throughput = throughput_lower_n(params, &lower.values)?;
    let upper_throughput = throughput_upper_n(params, &upper.values)?;
    let p = params.arrival_prob;
    let gap_bound = p
        * (1.0 - p).powi((horizon + params.window) as i32)
        * params.max_marginal()
        * (params.battery_capacity - upper.sum()).max(0.0);
    Ok(Sandwich {
        horizon,
        lower,
        upper,
        lower_throughput,
        upper_throughput,
        gap_bound,
    })
}

/// Doubles `N` until the throughput bounds are closer than `width`.
pub fn throughput_sandwich(params: &SystemParams, width: f64, n_cap: usize) -> Result<Sandwich> {
    if !(width > 0.0) {
        return Err(domain(format!("width must be positive, got {width}")));
    }
    let mut horizon = 1;
    loop {
        let s = sandwich_at(params, horizon, DEFAULT_KKT_TOL)?;
        if s.throughput_gap() < width {
            return Ok(s);
        }
        if horizon >= n_cap {
            return Err(Error::NonConvergence {
                iters: horizon,
                detail: format!("throughput gap {:e} still above {width:e}", s.throughput_gap()),
            });
        }
        horizon = (2 * horizon).min(n_cap);
    }
}

/// Midpoint of the sequence sandwich, refined until every reported entry is
/// bracketed to within `eps` (so each entry is within `eps/2` of the limit).
pub fn xi_star(params: &SystemParams, eps: f64) -> Result<XiSequence> {
    xi_star_with_bounds(params, eps, None, DEFAULT_N_CAP).map(|(xi, _)| xi)
}

/// As [`xi_star`], reporting only the first `report` entries (all `N` when
/// `None`) and returning the bracketing sandwich.
pub fn xi_star_with_bounds(
    params: &SystemParams,
    eps: f64,
    report: Option<usize>,
    n_cap: usize,
) -> Result<(XiSequence, Sandwich)> {
    params.validate()?;
    if params.window == 0 {
        return Err(domain("xi_star needs w >= 1; use solve_online_w0"));
    }
    if !(eps > 0.0) {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    if report == Some(0) {
        return Err(domain("report length must be positive"));
    }
    let mut horizon = report.unwrap_or(8).clamp(1, n_cap);
    let mut best = f64::INFINITY;
    loop {
        let s = sandwich_at(params, horizon, DEFAULT_KKT_TOL)?;
        let len = report.map_or(horizon, |r| r.min(horizon));
        let mut widest: f64 = 0.0;
        for i in 0..len {
            let width = s.lower.values[i] - s.upper.values[i];
            if width < -CROSSING_SLACK * params.battery_capacity.max(1.0) {
                return Err(Error::Solver {
                    reason: format!("bounds cross at entry {} for N = {horizon}", i + 1),
                    diagnostics: s.upper.diagnostics,
                });
            }
            widest = widest.max(width.max(0.0));
        }
        best = best.min(widest);
        if widest < eps && len == report.unwrap_or(len) {
            let values: Vec<f64> = (0..len)
                .map(|i| 0.5 * (s.lower.values[i] + s.upper.values[i]))
                .collect();
            let elementwise_error = (0..len)
                .map(|i| 0.5 * (s.lower.values[i] - s.upper.values[i]).max(0.0))
                .collect();
            let kkt_residual = stationary_residual(params, &values)
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()));
            let xi = XiSequence {
                values,
                kind: BoundKind::Limit,
                kkt_residual,
                params: *params,
                diagnostics: s.upper.diagnostics,
                elementwise_error,
            };
            return Ok((xi, s));
        }
        if horizon >= n_cap {
            return Err(Error::NonConvergence {
                iters: horizon,
                detail: format!("best elementwise sandwich width {best:e} above {eps:e}"),
            });
        }
        horizon = (2 * horizon).min(n_cap);
    }
}

/// Default elementwise tolerance `1e-8·B`.
pub fn default_eps(params: &SystemParams) -> f64 {
    DEFAULT_XI_EPS_REL * params.battery_capacity
}
