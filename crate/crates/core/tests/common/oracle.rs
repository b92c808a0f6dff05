//! Generic reference solvers used only by tests: accelerated projected
//! gradient on the capped simplex, objectives built by enumerating renewal
//! cycles one by one, and a discretized dynamic program for the offline
//! allocator.

use ehpc_core::SystemParams;

/// Cycle lengths enumerated explicitly for the genie objective.
const GENIE_CYCLES: usize = 4000;

pub fn rate(params: &SystemParams, a: f64) -> f64 {
    0.5 * (1.0 + params.channel_gain * a).log2()
}

pub fn marginal(params: &SystemParams, a: f64) -> f64 {
    params.channel_gain / (2.0 * std::f64::consts::LN_2 * (1.0 + params.channel_gain * a))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Tail {
    /// Nothing may be spent after the last quiet slot.
    Forbidden,
    /// The next arrival time is revealed after the last quiet slot.
    Genie,
}

/// Long-run throughput of the finite quiet-period sequence `x` under the
/// chosen tail rule, with its gradient. Cycles of length `L` occur with
/// probability `p(1−p)^{L−1}`; the throughput is `p·E[cycle reward]`.
pub fn cycle_objective(params: &SystemParams, x: &[f64], tail: Tail) -> (f64, Vec<f64>) {
    let p = params.arrival_prob;
    let q = 1.0 - p;
    let b = params.battery_capacity;
    let w = params.window;
    let n = x.len();
    let mut prefix_rate = vec![0.0; n + 1];
    let mut rem = vec![b; n + 1];
    for k in 0..n {
        prefix_rate[k + 1] = prefix_rate[k] + rate(params, x[k]);
        rem[k + 1] = rem[k] - x[k];
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut prob = p;
    // Cycles seen in full from their first slot.
    for len in 1..=w {
        value += prob * len as f64 * rate(params, b / len as f64);
        prob *= q;
    }
    // Cycles whose arrival is spotted after `m ≤ N` quiet slots.
    let wf = w as f64;
    for m in 1..=n {
        if w > 0 {
            value += prob * (prefix_rate[m] + wf * rate(params, rem[m] / wf));
            let tail_slope = marginal(params, rem[m] / wf);
            for j in 0..m {
                grad[j] += prob * (marginal(params, x[j]) - tail_slope);
            }
        } else {
            value += prob * prefix_rate[m];
            for j in 0..m {
                grad[j] += prob * marginal(params, x[j]);
            }
        }
        prob *= q;
    }
    // Remaining cycles (length > N + w), probability mass `prob / p`.
    match tail {
        Tail::Forbidden => {
            let mass = prob / p;
            let end = if w > 0 { wf * rate(params, rem[n] / wf) } else { 0.0 };
            value += mass * (prefix_rate[n] + end);
            let tail_slope = if w > 0 { marginal(params, rem[n] / wf) } else { 0.0 };
            for j in 0..n {
                grad[j] += mass * (marginal(params, x[j]) - tail_slope);
            }
        }
        Tail::Genie => {
            for extra in 1..=GENIE_CYCLES {
                // The arrival lands `extra + w` slots after the last quiet slot
                // and the genie spreads the remainder over those slots.
                let span = (extra + w) as f64;
                value += prob * (prefix_rate[n] + span * rate(params, rem[n] / span));
                let tail_slope = marginal(params, rem[n] / span);
                for j in 0..n {
                    grad[j] += prob * (marginal(params, x[j]) - tail_slope);
                }
                prob *= q;
            }
        }
    }
    (p * value, grad.into_iter().map(|g| p * g).collect())
}

/// Euclidean projection onto `{x ≥ 0, Σx ≤ cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= cap {
        return clamped;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        acc += s;
        let t = (acc - cap) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Maximizes a smooth concave `f` over `{x ≥ 0, Σx ≤ cap}` by FISTA with
/// gradient-based restarts. `lipschitz` bounds the gradient's Lipschitz
/// constant.
pub fn maximize_on_simplex(
    objective: impl Fn(&[f64]) -> (f64, Vec<f64>),
    start: Vec<f64>,
    cap: f64,
    lipschitz: f64,
    max_iters: usize,
) -> Vec<f64> {
    let step = 1.0 / lipschitz;
    let mut x = project_capped_simplex(&start, cap);
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    for _ in 0..max_iters {
        let (_, g) = objective(&y);
        let ascent: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi + step * gi).collect();
        let next = project_capped_simplex(&ascent, cap);
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart momentum when it points against the gradient step.
        let against: f64 = y
            .iter()
            .zip(&next)
            .zip(&x)
            .map(|((yi, ni), xi)| (yi - ni) * (ni - xi))
            .sum();
        if against > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(ni, xi)| ni + beta * (ni - xi)).collect();
            t = t_next;
        }
        x = next;
        if moved < 1e-15 * cap.max(1.0) {
            break;
        }
    }
    x
}

/// Reference maximizer of the bound program with `n` quiet slots.
pub fn bound_program(params: &SystemParams, n: usize, tail: Tail) -> Vec<f64> {
    let b = params.battery_capacity;
    let lipschitz = params.channel_gain * marginal(params, 0.0) * (n as f64 + 2.0);
    let start = vec![b / (n + params.window.max(1)) as f64; n];
    maximize_on_simplex(|x| cycle_objective(params, x, tail), start, b, lipschitz, 2_000_000)
}

/// Reference for the online (`w = 0`) program over `n` slots.
pub fn online_program(params: &SystemParams, n: usize) -> Vec<f64> {
    let b = params.battery_capacity;
    let lipschitz = params.channel_gain * marginal(params, 0.0);
    let p = params.arrival_prob;
    let objective = |x: &[f64]| {
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(x.len());
        let mut weight = p;
        for &xi in x {
            value += weight * rate(params, xi);
            grad.push(weight * marginal(params, xi));
            weight *= 1.0 - p;
        }
        (value, grad)
    };
    maximize_on_simplex(objective, vec![b / n as f64; n], b, lipschitz, 2_000_000)
}

/// First action of the receding-horizon offline allocation computed by a
/// dynamic program on the battery grid `{0, h, 2h, …, B}` with `h = B/steps`.
/// `battery` and all arrivals must lie on the grid.
pub fn offline_dp(params: &SystemParams, battery: f64, window: &[f64], steps: usize) -> f64 {
    let b = params.battery_capacity;
    let h = b / steps as f64;
    let idx = |e: f64| (e / h).round() as usize;
    let horizon = window.len() + 1;
    let rates: Vec<f64> = (0..=steps).map(|i| rate(params, i as f64 * h)).collect();
    // Value of the last slot: spend everything.
    let mut value: Vec<f64> = rates.clone();
    let mut first_choice = vec![0usize; steps + 1];
    for t in (0..horizon - 1).rev() {
        let arrival = idx(window[t]);
        let mut next = vec![f64::NEG_INFINITY; steps + 1];
        for level in 0..=steps {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for (a, rate) in rates.iter().enumerate().take(level + 1) {
                let after = (level - a + arrival).min(steps);
                let v = rate + value[after];
                if v > best + 1e-15 {
                    best = v;
                    best_a = a;
                }
            }
            next[level] = best;
            if t == 0 {
                first_choice[level] = best_a;
            }
        }
        value = next;
    }
    if horizon == 1 {
        return battery;
    }
    first_choice[idx(battery)] as f64 * h
}
