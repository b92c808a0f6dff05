//! Average-throughput functionals of a quiet-period sequence.
//!
//! A renewal cycle of length `k` (battery full at its start, next full charge
//! `k` slots later) has probability `p(1−p)^{k−1}`. Cycles no longer than `w`
//! are seen in full and spread `B` uniformly; longer cycles spend `ξ_1, …,
//! ξ_{k−w}` and then spread what is left over the final `w` slots. Dividing
//! the expected cycle reward by the mean cycle length `1/p` gives the
//! throughput.

use crate::error::{domain, Result};
use crate::model::SystemParams;

use super::series::GeometricTail;
use super::{remaining_after, Method, ThroughputEstimate, XiSequence};

/// Contribution of the cycles of length `k ≤ w`.
fn short_cycles(params: &SystemParams) -> f64 {
    let p = params.arrival_prob;
    let b = params.battery_capacity;
    let mut weight = p * p;
    let mut acc = 0.0;
    for k in 1..=params.window {
        let k = k as f64;
        acc += weight * k * params.reward(b / k);
        weight *= 1.0 - p;
    }
    acc
}

fn check_sequence(params: &SystemParams, values: &[f64]) -> Result<()> {
    params.validate()?;
    if values.is_empty() {
        return Err(domain("sequence must have at least one entry"));
    }
    if let Some(x) = values.iter().find(|x| !(**x >= 0.0)) {
        return Err(domain(format!("sequence entries must be nonnegative, got {x}")));
    }
    let total: f64 = values.iter().sum();
    if total > params.battery_capacity * (1.0 + 1e-12) {
        return Err(domain(format!(
            "sequence spends {total} > B = {}",
            params.battery_capacity
        )));
    }
    Ok(())
}

/// Quiet-slot rewards plus end-of-cycle uniform rewards for the first `N-1`
/// remainders: the part shared by both finite bounds.
fn common_terms(params: &SystemParams, values: &[f64], remaining: &[f64]) -> f64 {
    let p = params.arrival_prob;
    let q = 1.0 - p;
    let w = params.window as f64;
    let n = values.len();
    let mut weight = p * q.powi(params.window as i32);
    let mut acc = short_cycles(params);
    for k in 0..n {
        acc += weight * params.reward(values[k]);
        if params.window > 0 && k + 1 < n {
            acc += p * weight * w * params.reward(remaining[k] / w);
        }
        weight *= q;
    }
    acc
}

/// Throughput when nothing is spent after slot `N` of a quiet period.
pub fn throughput_lower_n(params: &SystemParams, values: &[f64]) -> Result<ThroughputEstimate> {
    check_sequence(params, values)?;
    let remaining = remaining_after(params.battery_capacity, values);
    let mut value = common_terms(params, values, &remaining);
    if params.window > 0 {
        let n = values.len();
        let w = params.window as f64;
        let p = params.arrival_prob;
        value += p * (1.0 - p).powi((n + params.window - 1) as i32) * w * params.reward(remaining[n - 1] / w);
    }
    Ok(ThroughputEstimate {
        value,
        method: Method::AnalyticLower,
        error_bound: 0.0,
    })
}

/// Throughput when a genie reveals the next arrival after `N` quiet slots.
pub fn throughput_upper_n(params: &SystemParams, values: &[f64]) -> Result<ThroughputEstimate> {
    check_sequence(params, values)?;
    let remaining = remaining_after(params.battery_capacity, values);
    let n = values.len();
    let p = params.arrival_prob;
    let first = params.window.max(1);
    let tail = GeometricTail::new(p, first);
    let (genie, err) = tail.mean_uniform_reward(params, remaining[n - 1]);
    let scale = p * (1.0 - p).powi((n + first - 1) as i32);
    Ok(ThroughputEstimate {
        value: common_terms(params, values, &remaining) + scale * genie,
        method: Method::AnalyticUpper,
        error_bound: scale * err,
    })
}

/// Long-run throughput of the stationary policy driven by `xi`, with the
/// sequence extended by zeros. The error bound covers both the neglected
/// tail of the exact limit and the certified per-entry error of `xi`.
pub fn throughput_inf(xi: &XiSequence) -> Result<ThroughputEstimate> {
    let params = &xi.params;
    let values = &xi.values;
    let lower = throughput_lower_n(params, values)?;
    let p = params.arrival_prob;
    let q = 1.0 - p;
    let w = params.window;
    let n = values.len();
    let top = params.max_marginal();

    let errors: Vec<f64> = if xi.elementwise_error.len() == n {
        xi.elementwise_error.clone()
    } else {
        vec![0.0; n]
    };
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for e in &errors {
        acc += e;
        cumulative.push(acc);
    }

    let mut propagated = 0.0;
    let mut weight = p * q.powi(w as i32);
    for k in 0..n {
        propagated += weight * top * errors[k];
        if w > 0 {
            let coef = if k + 1 < n { p * weight } else { weight };
            propagated += coef * top * cumulative[k];
        }
        weight *= q;
    }

    let rest = remaining_after(params.battery_capacity, values)[n - 1] + cumulative[n - 1];
    let tail = if w == 0 {
        q.powi(n as i32) * params.reward(rest)
    } else {
        q.powi((n + w) as i32) * (1.0 + p * w as f64) * params.reward(rest)
    };

    Ok(ThroughputEstimate {
        value: lower.value,
        method: Method::AnalyticLimit,
        error_bound: tail + propagated,
    })
}

/// Throughput with unlimited lookahead: `Σ_k p²(1−p)^{k−1} k R(B/k)`.
pub fn offline_throughput(params: &SystemParams) -> Result<ThroughputEstimate> {
    params.validate()?;
    let p = params.arrival_prob;
    let q = 1.0 - p;
    let b = params.battery_capacity;
    let bound_scale = params.max_marginal() * b;
    let mut value = 0.0;
    let mut mass = 1.0; // (1−p)^{k−1}
    let mut k = 1usize;
    loop {
        let kf = k as f64;
        value += p * p * mass * kf * params.reward(b / kf);
        mass *= q;
        // k·R(B/k) increases to R'(0)·B, so the remaining terms sum to at most this.
        let tail = p * mass * bound_scale;
        if tail <= 1e-14 * value || k >= 50_000_000 {
            return Ok(ThroughputEstimate {
                value,
                method: Method::AnalyticLimit,
                error_bound: tail,
            });
        }
        k += 1;
    }
}

/// Residuals of the infinite-horizon stationarity equations
/// `R'(x_i) − p·R'((B − S_i)/w) − (1−p)·R'(x_{i+1})` for `i < len − 1`.
pub fn stationary_residual(params: &SystemParams, values: &[f64]) -> Vec<f64> {
    let remaining = remaining_after(params.battery_capacity, values);
    let w = params.window.max(1) as f64;
    let p = params.arrival_prob;
    values
        .windows(2)
        .zip(&remaining)
        .map(|(pair, &rest)| {
            params.reward_deriv(pair[0]) - p * params.reward_deriv(rest / w) - (1.0 - p) * params.reward_deriv(pair[1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::new(100.0, 0.3, 0.5, 4).unwrap()
    }

    #[test]
    fn single_entry_lower_is_closed_form() {
        let pr = params();
        let x = 20.0;
        let direct = (1..=4)
            .map(|k| 0.09 * 0.7f64.powi(k - 1) * k as f64 * pr.reward(100.0 / k as f64))
            .sum::<f64>()
            + 0.3 * 0.7f64.powi(4) * pr.reward(x)
            + 0.3 * 0.7f64.powi(4) * 4.0 * pr.reward((100.0 - x) / 4.0);
        let t = throughput_lower_n(&pr, &[x]).unwrap();
        assert!((t.value - direct).abs() < 1e-14);
        assert_eq!(t.error_bound, 0.0);
    }

    #[test]
    fn overspent_sequence_is_rejected() {
        assert!(throughput_lower_n(&params(), &[60.0, 50.0]).is_err());
        assert!(throughput_upper_n(&params(), &[-1.0]).is_err());
    }

    #[test]
    fn offline_matches_partial_sum() {
        let pr = params();
        let brute: f64 = (1..=2000)
            .map(|k| 0.09 * 0.7f64.powi(k - 1) * k as f64 * pr.reward(100.0 / k as f64))
            .sum();
        let t = offline_throughput(&pr).unwrap();
        assert!((t.value - brute).abs() < 1e-12);
        assert!(t.error_bound < 1e-12 * t.value);
    }

    #[test]
    fn near_certain_arrivals_give_full_rate() {
        let pr = params().with_prob(1.0 - 1e-9);
        let t = offline_throughput(&pr).unwrap();
        assert!((t.value - pr.reward(100.0)).abs() < 1e-7);
    }

    #[test]
    fn equivalent_cycle_form() {
        // Direct cycle-by-cycle expectation versus the regrouped sum.
        let pr = params();
        let xi = [18.0, 15.0, 12.0, 9.0];
        let mut padded = xi.to_vec();
        padded.resize(400, 0.0);
        let rem = remaining_after(100.0, &padded);
        let mut direct = 0.0;
        for k in 1..=404usize {
            let prob = 0.3 * 0.7f64.powi(k as i32 - 1);
            let cycle = if k <= 4 {
                k as f64 * pr.reward(100.0 / k as f64)
            } else {
                padded[..k - 4].iter().map(|&x| pr.reward(x)).sum::<f64>() + 4.0 * pr.reward(rem[k - 5] / 4.0)
            };
            direct += prob * cycle;
        }
        direct *= 0.3;
        let t = throughput_lower_n(&pr, &xi).unwrap();
        assert!((t.value - direct).abs() < 1e-12, "{} vs {direct}", t.value);
    }
}
