//! Finite-horizon bounds on the optimal quiet-period expenditure sequence.
//!
//! Within a renewal cycle (battery just refilled, no arrival visible yet) the
//! optimal stationary policy spends `ξ*_1, ξ*_2, …`. Two finite programs
//! bracket it: forbidding consumption after `N` quiet slots gives a sequence
//! lying above `ξ*` and a throughput lower bound, while letting a genie reveal
//! the next arrival after `N` quiet slots gives a sequence below `ξ*` and a
//! throughput upper bound. Both programs are solved exactly through their
//! first-order conditions by a shooting recursion.

mod online;
mod sandwich;
mod series;
mod shooting;
mod throughput;

use serde::Serialize;

pub use crate::error::SolverDiagnostics;
use crate::model::SystemParams;

pub use online::{solve_online_w0, solve_w0_lower, solve_w0_upper};
pub use sandwich::{default_eps, sandwich_at, throughput_sandwich, xi_star, xi_star_with_bounds, Sandwich};
pub use series::GeometricTail;
pub use shooting::{kkt_residual_lower, kkt_residual_upper, solve_lower, solve_upper};
pub use throughput::{offline_throughput, stationary_residual, throughput_inf, throughput_lower_n, throughput_upper_n};

/// Default KKT residual tolerance (marginal-rate units).
pub const DEFAULT_KKT_TOL: f64 = 1e-10;

/// Default elementwise sandwich width for [`xi_star`], relative to `B`.
pub const DEFAULT_XI_EPS_REL: f64 = 1e-8;

/// Largest horizon tried by the iterative refinements.
pub const DEFAULT_N_CAP: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    LowerBound,
    UpperBound,
    Limit,
}

/// A finite expenditure sequence with the bound it represents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiSequence {
    pub values: Vec<f64>,
    pub kind: BoundKind,
    /// Max-norm residual of the defining equations, re-evaluated from `values`.
    pub kkt_residual: f64,
    pub params: SystemParams,
    pub diagnostics: SolverDiagnostics,
    /// Certified per-entry distance to the exact limit; zeros for bound sequences.
    pub elementwise_error: Vec<f64>,
}

impl XiSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `B − Σ_{j≤i} ξ_j` for every `i`, clamped at zero.
    pub fn remaining(&self) -> Vec<f64> {
        remaining_after(self.params.battery_capacity, &self.values)
    }
}

pub(crate) fn remaining_after(capacity: f64, values: &[f64]) -> Vec<f64> {
    let mut spent = 0.0;
    values
        .iter()
        .map(|&x| {
            spent += x;
            (capacity - spent).max(0.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    AnalyticLower,
    AnalyticUpper,
    AnalyticLimit,
    ValueIteration,
    MonteCarlo,
}

/// A throughput value (bits/slot) with its error certificate: a deterministic
/// bound for analytic methods, a confidence half-width for Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputEstimate {
    pub value: f64,
    pub method: Method,
    pub error_bound: f64,
}
