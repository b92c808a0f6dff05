//! Shooting solver for the lower (forbidden tail) and upper (genie tail)
//! programs.
//!
//! The first-order conditions of both programs share the interior recursion
//!
//! ```text
//! R'(ξ_i) = p·R'((B − S_i)/w) + (1 − p)·R'(ξ_{i+1}),   1 ≤ i < N,
//! ```
//!
//! and differ only in the terminal equation for `ξ_N`. Shooting runs from
//! the terminal end: fixing the energy `r = B − S_N` left after slot `N`
//! determines `ξ_N`, and every earlier `ξ_i` follows explicitly because
//! `B − S_i = r + ξ_{i+1} + … + ξ_N`. Each step inverts a convex combination
//! of marginal rates, so the recursion never leaves the feasible range, and
//! every `ξ_i` is strictly increasing in `r`. Bisection on `r` then closes the
//! budget equation `r + Σ ξ_i = B`.

use crate::error::{domain, Error, Result, SolverDiagnostics};
use crate::model::{marginal, SystemParams};

use super::series::GeometricTail;
use super::{remaining_after, BoundKind, XiSequence};

const MAX_BISECTIONS: usize = 4096;

enum Terminal {
    /// `ξ_N = (B − S_N)/w`.
    Forbidden,
    /// `R'(ξ_N) = Σ_{k≥w} p(1−p)^{k−w} R'((B − S_N)/k)`.
    Genie(GeometricTail),
}

pub fn solve_lower(params: &SystemParams, horizon: usize, tol: f64) -> Result<XiSequence> {
    check_inputs(params, horizon, tol)?;
    solve(params, horizon, tol, &Terminal::Forbidden)
}

pub fn solve_upper(params: &SystemParams, horizon: usize, tol: f64) -> Result<XiSequence> {
    check_inputs(params, horizon, tol)?;
    let tail = GeometricTail::new(params.arrival_prob, params.window);
    solve(params, horizon, tol, &Terminal::Genie(tail))
}

fn check_inputs(params: &SystemParams, horizon: usize, tol: f64) -> Result<()> {
    params.validate()?;
    if params.window == 0 {
        return Err(domain("window must be at least 1; use solve_online_w0 for w = 0"));
    }
    if horizon == 0 {
        return Err(domain("horizon must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Fills `out` with the sequence generated from remainder `r`; returns
/// `(r + Σ ξ, truncation error of the terminal series)`.
fn shoot(params: &SystemParams, horizon: usize, r: f64, terminal: &Terminal, out: &mut Vec<f64>) -> (f64, f64) {
    let w = params.window as f64;
    let p = params.arrival_prob;
    let top = params.max_marginal();
    out.clear();
    out.resize(horizon, 0.0);

    let (last, trunc) = match terminal {
        Terminal::Forbidden => (r / w, 0.0),
        Terminal::Genie(tail) => {
            let (y, err) = tail.mean_marginal(params, r);
            (params.inv_marginal(y.min(top)), err)
        }
    };
    out[horizon - 1] = last;

    let mut rest = r + last;
    for i in (0..horizon - 1).rev() {
        let y = p * params.reward_deriv(rest / w) + (1.0 - p) * params.reward_deriv(out[i + 1]);
        let x = params.inv_marginal(y.min(top));
        out[i] = x;
        rest += x;
    }
    (rest, trunc)
}

fn solve(params: &SystemParams, horizon: usize, tol: f64, terminal: &Terminal) -> Result<XiSequence> {
    let shot = bisect(params, horizon, terminal);
    let failure = match shot {
        Ok((start, diag)) => match polish(params, &start, terminal, tol, diag) {
            Ok(seq) => return Ok(seq),
            Err(residual) => (format!("KKT residual {residual:e} above tolerance {tol:e}"), diag),
        },
        Err(failure) => failure,
    };
    // Continuation: extend the half-horizon solution geometrically and let
    // Newton steps finish.
    if horizon >= 2 {
        let base = solve(params, horizon / 2, tol, terminal)?;
        let start = extend_geometric(&base.values, horizon);
        if let Ok(seq) = polish(params, &start, terminal, tol, base.diagnostics) {
            return Ok(seq);
        }
    }
    let (reason, diagnostics) = failure;
    Err(Error::Solver { reason, diagnostics })
}

/// Bisection on the remainder `r`; returns the closest shot.
fn bisect(
    params: &SystemParams,
    horizon: usize,
    terminal: &Terminal,
) -> std::result::Result<(Vec<f64>, SolverDiagnostics), (String, SolverDiagnostics)> {
    let capacity = params.battery_capacity;
    let mut buf = Vec::with_capacity(horizon);
    let excess = |r: f64, buf: &mut Vec<f64>| {
        let (total, trunc) = shoot(params, horizon, r, terminal, buf);
        (total - capacity, trunc)
    };

    let mut diag = SolverDiagnostics::default();
    let (mut lo, mut hi) = (0.0, capacity);
    let (mut f_lo, _) = excess(lo, &mut buf);
    let (mut f_hi, _) = excess(hi, &mut buf);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        diag.bracket = (lo, hi);
        diag.terminal_residual = f_lo.abs().min(f_hi.abs());
        return Err((
            format!("budget residual does not change sign on [0, B]: {f_lo} .. {f_hi}"),
            diag,
        ));
    }

    let mut iters = 0;
    while iters < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iters += 1;
        let (f_mid, _) = excess(mid, &mut buf);
        if f_mid < f_lo || f_mid > f_hi {
            diag.bisection_iters = iters;
            diag.bracket = (lo, hi);
            diag.terminal_residual = f_mid.abs();
            return Err(("budget residual is not monotone in the remainder".into(), diag));
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }

    let r = if f_hi.abs() <= f_lo.abs() { hi } else { lo };
    let (f_r, trunc) = excess(r, &mut buf);
    diag.bisection_iters = iters;
    diag.bracket = (lo, hi);
    diag.terminal_residual = f_r.abs();
    diag.truncation_error = trunc;
    Ok((buf, diag))
}

/// Newton-polishes `start` (adjacent floats for `r` can move `Σ ξ` by many
/// ulps of `B`) and accepts it if the re-evaluated residual is below `tol`.
fn polish(
    params: &SystemParams,
    start: &[f64],
    terminal: &Terminal,
    tol: f64,
    diagnostics: SolverDiagnostics,
) -> std::result::Result<XiSequence, f64> {
    let mut values = refine(params, start, terminal);
    if values.is_empty() {
        values = start.to_vec();
    }
    let (kind, residual) = match terminal {
        Terminal::Forbidden => (BoundKind::LowerBound, kkt_residual_lower(params, &values)),
        Terminal::Genie(_) => (BoundKind::UpperBound, kkt_residual_upper(params, &values)),
    };
    if !(residual < tol) {
        return Err(residual);
    }
    Ok(XiSequence {
        elementwise_error: vec![0.0; values.len()],
        values,
        kind,
        kkt_residual: residual,
        params: *params,
        diagnostics,
    })
}

fn extend_geometric(base: &[f64], horizon: usize) -> Vec<f64> {
    let n = base.len();
    let ratio = if n >= 2 && base[n - 2] > 0.0 {
        (base[n - 1] / base[n - 2]).clamp(0.0, 0.99)
    } else {
        0.5
    };
    let mut out = base.to_vec();
    let mut next = base[n - 1] * ratio;
    while out.len() < horizon {
        out.push(next);
        next *= ratio;
    }
    out
}

/// Tridiagonal system `J d = rhs` by the Thomas algorithm; `J` must be
/// diagonally dominant.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / m;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Scaled gradient of the bound program in the remainder variables
/// `r_k = B − S_k`; entry `k` is the `k`-th optimality equation.
fn optimality_equations(params: &SystemParams, rem: &[f64], terminal: &Terminal, out: &mut [f64]) -> Option<f64> {
    let n = rem.len();
    let w = params.window as f64;
    let p = params.arrival_prob;
    let capacity = params.battery_capacity;
    let xi = |k: usize| if k == 0 { capacity - rem[0] } else { rem[k - 1] - rem[k] };
    // Iterates may dip below zero by rounding-sized amounts; `R'` is smooth there.
    let floor = -1e-9 * capacity;
    if (0..n).any(|k| !(xi(k) >= floor) || !(rem[k] >= floor)) {
        return None;
    }
    let g = params.channel_gain;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let x = xi(k);
        out[k] = if k + 1 < n {
            -marginal(x, g) + (1.0 - p) * marginal(xi(k + 1), g) + p * marginal(rem[k] / w, g)
        } else {
            let end = match terminal {
                Terminal::Forbidden => marginal(rem[k] / w, g),
                Terminal::Genie(tail) => tail.mean_marginal(params, rem[k].max(0.0)).0,
            };
            end - marginal(x, g)
        };
        worst = worst.max(out[k].abs());
    }
    Some(worst)
}

#[inline]
fn second_deriv(params: &SystemParams, a: f64) -> f64 {
    let g = params.channel_gain;
    let m = marginal(a, g);
    -g * m / (1.0 + g * a)
}

/// Remainders of `start` after clamping negatives and shrinking it to leave
/// part of the budget unspent.
fn feasible_remainders(capacity: f64, start: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = start.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let limit = capacity * (1.0 - 1e-9);
    if total <= limit {
        return remaining_after(capacity, &clamped);
    }
    let scale = limit / total;
    remaining_after(capacity, &clamped.iter().map(|x| x * scale).collect::<Vec<_>>())
}

/// Damped Newton iteration on the optimality equations, started from a
/// shooting solution. Returns an empty vector when the start is infeasible.
fn refine(params: &SystemParams, start: &[f64], terminal: &Terminal) -> Vec<f64> {
    let n = start.len();
    let w = params.window as f64;
    let p = params.arrival_prob;
    let capacity = params.battery_capacity;

    let mut rem = feasible_remainders(capacity, start);
    let mut eqs = vec![0.0; n];
    let Some(mut worst) = optimality_equations(params, &rem, terminal, &mut eqs) else {
        return Vec::new();
    };
    let (mut sub, mut diag, mut sup) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut trial = vec![0.0; n];
    let mut trial_eqs = vec![0.0; n];

    for _ in 0..200 {
        if worst == 0.0 {
            break;
        }
        for k in 0..n {
            let x = if k == 0 { capacity - rem[0] } else { rem[k - 1] - rem[k] };
            let h = second_deriv(params, x);
            sub[k] = if k > 0 { -h } else { 0.0 };
            if k + 1 < n {
                let h_next = second_deriv(params, rem[k] - rem[k + 1]);
                diag[k] = h + (1.0 - p) * h_next + p / w * second_deriv(params, rem[k] / w);
                sup[k] = -(1.0 - p) * h_next;
            } else {
                let end = match terminal {
                    Terminal::Forbidden => second_deriv(params, rem[k] / w) / w,
                    Terminal::Genie(tail) => tail.mean_curvature(params, rem[k].max(0.0)),
                };
                diag[k] = h + end;
                sup[k] = 0.0;
            }
        }
        let rhs: Vec<f64> = eqs.iter().map(|e| -e).collect();
        let step = solve_tridiagonal(&sub, &diag, &sup, &rhs);

        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            for k in 0..n {
                trial[k] = rem[k] + t * step[k];
            }
            if let Some(trial_worst) = optimality_equations(params, &trial, terminal, &mut trial_eqs) {
                if trial_worst < worst {
                    accepted = true;
                    worst = trial_worst;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        std::mem::swap(&mut rem, &mut trial);
        std::mem::swap(&mut eqs, &mut trial_eqs);
    }

    let mut prev = capacity;
    rem.iter()
        .map(|&r| {
            let x = (prev - r).max(0.0);
            prev = r;
            x
        })
        .collect()
}

/// Interior residuals `|R'(ξ_i) − p·R'((B−S_i)/w) − (1−p)·R'(ξ_{i+1})|`, `i < N`.
fn interior_residual(params: &SystemParams, values: &[f64], remaining: &[f64]) -> f64 {
    let w = params.window as f64;
    let p = params.arrival_prob;
    (0..values.len().saturating_sub(1))
        .map(|i| {
            (params.reward_deriv(values[i])
                - p * params.reward_deriv(remaining[i] / w)
                - (1.0 - p) * params.reward_deriv(values[i + 1]))
            .abs()
        })
        .fold(0.0, f64::max)
}

fn feasible(params: &SystemParams, values: &[f64]) -> bool {
    !values.is_empty()
        && params.window > 0
        && values.iter().all(|&x| x >= 0.0)
        && values.iter().sum::<f64>() <= params.battery_capacity * (1.0 + 1e-12)
}

/// Max-norm residual of the lower-program optimality system, evaluated
/// from the sequence and `B` alone.
pub fn kkt_residual_lower(params: &SystemParams, values: &[f64]) -> f64 {
    if !feasible(params, values) {
        return f64::INFINITY;
    }
    let remaining = remaining_after(params.battery_capacity, values);
    let n = values.len();
    let terminal =
        (params.reward_deriv(values[n - 1]) - params.reward_deriv(remaining[n - 1] / params.window as f64)).abs();
    interior_residual(params, values, &remaining).max(terminal)
}

/// Max-norm residual of the upper-program optimality system.
pub fn kkt_residual_upper(params: &SystemParams, values: &[f64]) -> f64 {
    if !feasible(params, values) {
        return f64::INFINITY;
    }
    let remaining = remaining_after(params.battery_capacity, values);
    let n = values.len();
    let tail = GeometricTail::new(params.arrival_prob, params.window);
    let (genie, _) = tail.mean_marginal(params, remaining[n - 1]);
    let terminal = (params.reward_deriv(values[n - 1]) - genie).abs();
    interior_residual(params, values, &remaining).max(terminal)
}
