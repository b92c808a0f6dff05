//! The online case `w = 0`: no arrival is ever visible ahead of time, so the
//! optimal sequence is finite and must drain the battery.

use crate::error::{domain, Error, Result, SolverDiagnostics};
use crate::model::SystemParams;

use super::series::GeometricTail;
use super::{BoundKind, XiSequence};

const MAX_BISECTIONS: usize = 4096;

fn check(params: &SystemParams, tol: f64) -> Result<()> {
    params.validate()?;
    if params.window != 0 {
        return Err(domain(format!("expected window 0, got {}", params.window)));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Sequence whose marginal rates grow by `1/(1−p)` per slot from `R'(ξ_1)`,
/// stopping before the marginal would reach `R'(0)`.
fn geometric_from(params: &SystemParams, first: f64, out: &mut Vec<f64>) -> f64 {
    let top = params.max_marginal();
    let q = 1.0 - params.arrival_prob;
    out.clear();
    let mut y = params.reward_deriv(first);
    let mut total = 0.0;
    while y < top {
        let x = params.inv_marginal(y);
        if x <= 0.0 {
            break;
        }
        out.push(x);
        total += x;
        y /= q;
    }
    total
}

/// Monotone bisection on a scalar with `f(lo) < 0 ≤ f(hi)`, to machine precision.
fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64, usize) {
    let mut iters = 0;
    while iters < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iters += 1;
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi, iters)
}

/// Optimal online sequence `(ξ*_1, …, ξ*_M)`: marginal rates in ratio
/// `1−p`, last marginal at least `(1−p)·R'(0)`, total exactly `B`.
pub fn solve_online_w0(params: &SystemParams, tol: f64) -> Result<XiSequence> {
    check(params, tol)?;
    let capacity = params.battery_capacity;
    let mut buf = Vec::new();
    let (lo, hi, iters) = bisect(0.0, capacity, |x1| geometric_from(params, x1, &mut buf) - capacity);
    let f_lo = geometric_from(params, lo, &mut buf) - capacity;
    let f_hi = geometric_from(params, hi, &mut buf) - capacity;
    let first = if f_hi.abs() <= f_lo.abs() { hi } else { lo };
    let total = geometric_from(params, first, &mut buf);

    let diagnostics = SolverDiagnostics {
        bisection_iters: iters,
        bracket: (lo, hi),
        terminal_residual: (total - capacity).abs(),
        truncation_error: 0.0,
    };
    let residual = online_residual(params, &buf);
    if !(residual < tol) {
        return Err(Error::Solver {
            reason: format!("online residual {residual:e} above tolerance {tol:e}"),
            diagnostics,
        });
    }
    Ok(XiSequence {
        elementwise_error: vec![0.0; buf.len()],
        values: buf,
        kind: BoundKind::Limit,
        kkt_residual: residual,
        params: *params,
        diagnostics,
    })
}

/// Residual of the online optimality system: ratio equations, the
/// stopping inequality and the budget equation.
pub(crate) fn online_residual(params: &SystemParams, values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&x| !(x > 0.0)) {
        return f64::INFINITY;
    }
    let q = 1.0 - params.arrival_prob;
    let ratio = values
        .windows(2)
        .map(|w| (params.reward_deriv(w[0]) - q * params.reward_deriv(w[1])).abs())
        .fold(0.0, f64::max);
    let last = params.reward_deriv(*values.last().unwrap());
    let stop = (q * params.max_marginal() - last).max(0.0);
    let budget = (values.iter().sum::<f64>() - params.battery_capacity).abs();
    ratio.max(stop).max(budget)
}

/// Weighted water-filling for `max Σ_{k≤N} p(1−p)^{k−1} R(ξ_k)` subject to `Σ ξ ≤ B`.
fn water_fill(params: &SystemParams, horizon: usize, level: f64, out: &mut Vec<f64>) -> f64 {
    let top = params.max_marginal();
    let q = 1.0 - params.arrival_prob;
    out.clear();
    let mut weight = params.arrival_prob;
    let mut total = 0.0;
    for _ in 0..horizon {
        let y = level / weight;
        let x = if y < top { params.inv_marginal(y) } else { 0.0 };
        out.push(x);
        total += x;
        weight *= q;
    }
    total
}

/// Maximizer of the `w = 0` lower-bound program over `N` slots.
pub fn solve_w0_lower(params: &SystemParams, horizon: usize, tol: f64) -> Result<XiSequence> {
    check(params, tol)?;
    if horizon == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    let capacity = params.battery_capacity;
    let top_level = params.arrival_prob * params.max_marginal();
    let mut buf = Vec::new();
    // Total spend decreases with the water level.
    let (lo, hi, iters) = bisect(0.0, top_level, |lvl| {
        capacity - water_fill(params, horizon, lvl, &mut buf)
    });
    let total = water_fill(params, horizon, hi, &mut buf);
    let level = hi;
    let diagnostics = SolverDiagnostics {
        bisection_iters: iters,
        bracket: (lo, hi),
        terminal_residual: (total - capacity).abs(),
        truncation_error: 0.0,
    };
    let residual = weighted_kkt_residual(params, &buf, level).max(diagnostics.terminal_residual);
    if !(residual < tol) {
        return Err(Error::Solver {
            reason: format!("w=0 lower residual {residual:e} above tolerance {tol:e}"),
            diagnostics,
        });
    }
    Ok(XiSequence {
        elementwise_error: vec![0.0; buf.len()],
        values: buf,
        kind: BoundKind::LowerBound,
        kkt_residual: residual,
        params: *params,
        diagnostics,
    })
}

/// `p(1−p)^{k−1} R'(ξ_k) = level` on the support and `≤ level` off it,
/// expressed in marginal-rate units.
fn weighted_kkt_residual(params: &SystemParams, values: &[f64], level: f64) -> f64 {
    let q = 1.0 - params.arrival_prob;
    let mut weight = params.arrival_prob;
    let mut worst: f64 = 0.0;
    for &x in values {
        let m = weight * params.reward_deriv(x);
        let gap = if x > 0.0 {
            (m - level).abs()
        } else {
            (m - level).max(0.0)
        };
        worst = worst.max(gap / weight);
        weight *= q;
    }
    worst
}

/// Maximizer of the `w = 0` genie upper-bound program over `N` slots.
pub fn solve_w0_upper(params: &SystemParams, horizon: usize, tol: f64) -> Result<XiSequence> {
    check(params, tol)?;
    if horizon == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    let capacity = params.battery_capacity;
    let p = params.arrival_prob;
    let tail = GeometricTail::new(p, 1);
    let genie_scale = p * (1.0 - p).powi(horizon as i32);
    let top_level = p * params.max_marginal();
    let mut buf = Vec::new();

    // Increasing in the level: the remainder grows and the genie marginal falls.
    let stationarity = |lvl: f64, buf: &mut Vec<f64>| {
        let rest = capacity - water_fill(params, horizon, lvl, buf);
        if rest < 0.0 {
            return (-1.0, rest, 0.0);
        }
        let (g, err) = tail.mean_marginal(params, rest);
        (lvl - genie_scale * g, rest, err)
    };
    let (lo, hi, iters) = bisect(0.0, top_level, |lvl| stationarity(lvl, &mut buf).0);
    let (gap, rest, trunc) = stationarity(hi, &mut buf);

    // Interior solution: stationarity holds; corner: remainder vanishes.
    let terminal = if rest > 1e-9 * capacity {
        gap.abs() / genie_scale
    } else {
        rest
    };
    let diagnostics = SolverDiagnostics {
        bisection_iters: iters,
        bracket: (lo, hi),
        terminal_residual: terminal,
        truncation_error: trunc,
    };
    let residual = weighted_kkt_residual(params, &buf, hi).max(terminal);
    if !(residual < tol) {
        return Err(Error::Solver {
            reason: format!("w=0 upper residual {residual:e} above tolerance {tol:e}"),
            diagnostics,
        });
    }
    Ok(XiSequence {
        elementwise_error: vec![0.0; buf.len()],
        values: buf,
        kind: BoundKind::UpperBound,
        kkt_residual: residual,
        params: *params,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn online() -> SystemParams {
        SystemParams::new(100.0, 0.3, 0.5, 0).unwrap()
    }

    #[test]
    fn online_sequence_structure() {
        let pr = online();
        let xi = solve_online_w0(&pr, 1e-9).unwrap();
        assert!(!xi.is_empty());
        for w in xi.values.windows(2) {
            let ratio = pr.reward_deriv(w[0]) / pr.reward_deriv(w[1]);
            assert!((ratio - 0.7).abs() < 1e-9);
            assert!(w[0] > w[1]);
        }
        assert!((xi.sum() - 100.0).abs() < 1e-9);
        let last = pr.reward_deriv(*xi.values.last().unwrap());
        assert!(last >= 0.7 * pr.max_marginal());
    }

    #[test]
    fn online_rejects_window() {
        let pr = online().with_window(2);
        assert!(solve_online_w0(&pr, 1e-9).is_err());
        assert!(solve_online_w0(&online(), 0.0).is_err());
    }

    #[test]
    fn lower_bound_program_reaches_online_optimum_for_long_horizons() {
        let pr = online();
        let star = solve_online_w0(&pr, 1e-9).unwrap();
        let m = star.len();
        let low = solve_w0_lower(&pr, m + 5, 1e-9).unwrap();
        for (i, &x) in low.values.iter().enumerate() {
            let expect = star.values.get(i).copied().unwrap_or(0.0);
            assert!((x - expect).abs() < 1e-8, "i={i}: {x} vs {expect}");
        }
    }

    #[test]
    fn upper_bound_program_has_interior_remainder_for_short_horizons() {
        let pr = online();
        let up = solve_w0_upper(&pr, 1, 1e-9).unwrap();
        assert!(up.sum() < 100.0);
        assert!(up.kkt_residual < 1e-9);
    }
}
