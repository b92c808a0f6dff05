//! Discretized average-reward MDP for Bernoulli arrivals, solved by relative
//! value iteration. Serves as an independent check on the analytic solver.
//!
//! States are `(battery grid index, window bitmask)` where bit `j` of the mask
//! says whether slot `τ+1+j` brings a full charge. Actions at battery `b` are
//! `n_a` evenly spaced levels in `[0, b]` plus `b/d` when an arrival is `d`
//! slots away. Off-grid successor batteries are split between the two
//! neighbouring grid points so that the mean is preserved.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::policy::Policy;

/// Upper limit on `n_b · 2^w`.
pub const MAX_STATES: usize = 1 << 26;

#[derive(Debug, Clone)]
pub struct DiscreteMdp {
    pub params: SystemParams,
    pub n_b: usize,
    pub n_a: usize,
    battery_grid: Vec<f64>,
    /// Per state: candidate actions, their rewards and the split of the
    /// no-arrival successor battery `b − a` over the grid.
    actions: Vec<Vec<Action>>,
}

#[derive(Debug, Clone, Copy)]
struct Action {
    amount: f64,
    reward: f64,
    lo: usize,
    frac: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueTable {
    /// Relative values, indexed like [`DiscreteMdp::state_index`].
    pub h: Vec<f64>,
    /// Average reward estimate (midpoint of the final Odoni bounds).
    pub g: f64,
    /// Spread of `Th − h` over states at the last sweep.
    pub span: f64,
    pub iterations: usize,
}

impl DiscreteMdp {
    pub fn windows(&self) -> usize {
        1 << self.params.window
    }

    pub fn state_count(&self) -> usize {
        self.n_b * self.windows()
    }

    pub fn battery_grid(&self) -> &[f64] {
        &self.battery_grid
    }

    pub fn state_index(&self, battery_idx: usize, mask: usize) -> usize {
        mask * self.n_b + battery_idx
    }

    /// Candidate action levels at battery index `i` with window `mask`.
    pub fn actions(&self, battery_idx: usize, mask: usize) -> Vec<f64> {
        self.actions[self.action_set(battery_idx, mask)]
            .iter()
            .map(|a| a.amount)
            .collect()
    }

    fn action_set(&self, battery_idx: usize, mask: usize) -> usize {
        let d = mask_distance(mask);
        d * self.n_b + battery_idx
    }

    /// Successor distribution `(state, probability)` of taking the `k`-th
    /// action of [`Self::actions`].
    pub fn transitions(&self, battery_idx: usize, mask: usize, k: usize) -> Vec<(usize, f64)> {
        let act = self.actions[self.action_set(battery_idx, mask)][k];
        let p = self.params.arrival_prob;
        let w = self.params.window;
        let top = self.n_b - 1;
        let mut out = Vec::new();
        for (charged, p_now) in self.arrival_now(mask) {
            for (fresh, p_next) in [(false, 1.0 - p), (true, p)] {
                let next_mask = shift_mask(mask, w, fresh);
                let prob = p_now * p_next;
                if charged {
                    out.push((self.state_index(top, next_mask), prob));
                } else {
                    out.push((self.state_index(act.lo, next_mask), prob * (1.0 - act.frac)));
                    if act.frac > 0.0 {
                        out.push((self.state_index(act.lo + 1, next_mask), prob * act.frac));
                    }
                }
            }
        }
        out
    }

    /// Distribution of whether the current slot's arrival is a full charge.
    fn arrival_now(&self, mask: usize) -> Vec<(bool, f64)> {
        if self.params.window == 0 {
            let p = self.params.arrival_prob;
            vec![(false, 1.0 - p), (true, p)]
        } else {
            vec![(mask & 1 == 1, 1.0)]
        }
    }
}

fn mask_distance(mask: usize) -> usize {
    if mask == 0 {
        0
    } else {
        mask.trailing_zeros() as usize + 1
    }
}

fn shift_mask(mask: usize, w: usize, fresh: bool) -> usize {
    if w == 0 {
        return 0;
    }
    (mask >> 1) | (usize::from(fresh) << (w - 1))
}

/// Builds the discretized model with `n_b` battery levels and `n_a` action levels.
pub fn build_mdp(params: &SystemParams, n_b: usize, n_a: usize) -> Result<DiscreteMdp> {
    params.validate()?;
    if n_b < 2 || n_a < 2 {
        return Err(Error::Config("grid sizes must be at least 2".into()));
    }
    let w = params.window;
    if w > 12 || n_b.saturating_mul(1 << w) > MAX_STATES {
        return Err(Error::Config(format!(
            "{n_b} battery levels times 2^{w} windows is too many states"
        )));
    }
    let cap = params.battery_capacity;
    let step = cap / (n_b - 1) as f64;
    let battery_grid: Vec<f64> = (0..n_b).map(|i| i as f64 * step).collect();
    // One action set per (distance, battery index).
    let mut actions = Vec::with_capacity((w + 1) * n_b);
    for d in 0..=w {
        for (i, &b) in battery_grid.iter().enumerate() {
            let mut set: Vec<f64> = (0..n_a).map(|k| b * k as f64 / (n_a - 1) as f64).collect();
            if d > 0 {
                let uniform = b / d as f64;
                if !set.contains(&uniform) {
                    set.push(uniform);
                    set.sort_by(f64::total_cmp);
                }
            }
            actions.push(
                set.into_iter()
                    .map(|a| {
                        let pos = ((b - a) / step).clamp(0.0, (n_b - 1) as f64);
                        let lo = (pos.floor() as usize).min(i);
                        let frac = if lo + 1 < n_b { pos - lo as f64 } else { 0.0 };
                        Action {
                            amount: a,
                            reward: params.reward(a),
                            lo,
                            frac,
                        }
                    })
                    .collect(),
            );
        }
    }
    Ok(DiscreteMdp {
        params: *params,
        n_b,
        n_a,
        battery_grid,
        actions,
    })
}

/// Continuation values `C[m>>1][j]`: expected `h` at battery index `j` after
/// the window shifts and a fresh slot is revealed.
fn continuation(mdp: &DiscreteMdp, h: &[f64]) -> Vec<Vec<f64>> {
    let w = mdp.params.window;
    let p = mdp.params.arrival_prob;
    let prefixes = if w == 0 { 1 } else { 1 << (w - 1) };
    (0..prefixes)
        .map(|prefix| {
            let lo_mask = shift_mask(prefix << 1, w, false);
            let hi_mask = shift_mask(prefix << 1, w, true);
            (0..mdp.n_b)
                .map(|j| (1.0 - p) * h[mdp.state_index(j, lo_mask)] + p * h[mdp.state_index(j, hi_mask)])
                .collect()
        })
        .collect()
}

/// Best value and the index of the smallest maximizing action at each state.
fn bellman(mdp: &DiscreteMdp, h: &[f64]) -> Vec<(f64, usize)> {
    let cont = continuation(mdp, h);
    let n_b = mdp.n_b;
    let top = n_b - 1;
    (0..mdp.state_count())
        .into_par_iter()
        .map(|s| {
            let (mask, i) = (s / n_b, s % n_b);
            let c = &cont[if mdp.params.window == 0 { 0 } else { mask >> 1 }];
            let outcomes = mdp.arrival_now(mask);
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (k, act) in mdp.actions[mdp.action_set(i, mask)].iter().enumerate() {
                let mut v = act.reward;
                for &(charged, prob) in &outcomes {
                    let next = if charged {
                        c[top]
                    } else if act.frac > 0.0 {
                        (1.0 - act.frac) * c[act.lo] + act.frac * c[act.lo + 1]
                    } else {
                        c[act.lo]
                    };
                    v += prob * next;
                }
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            (best, arg)
        })
        .collect()
}

/// Relative value iteration with reference state (full battery, empty window),
/// stopping when the spread of `Th − h` falls below `tol·(1 + |g|)`.
pub fn relative_value_iteration(mdp: &DiscreteMdp, tol: f64, max_iters: usize) -> Result<ValueTable> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let reference = mdp.state_index(mdp.n_b - 1, 0);
    let mut h = vec![0.0; mdp.state_count()];
    let mut span = f64::INFINITY;
    for iter in 1..=max_iters {
        let th: Vec<f64> = bellman(mdp, &h).into_iter().map(|(v, _)| v).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (t, old) in th.iter().zip(&h) {
            let d = t - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let g = 0.5 * (lo + hi);
        let shift = th[reference];
        h = th.into_iter().map(|v| v - shift).collect();
        if span < tol * (1.0 + g.abs()) {
            return Ok(ValueTable {
                h,
                g,
                span,
                iterations: iter,
            });
        }
    }
    Err(Error::NonConvergence {
        iters: max_iters,
        detail: format!("relative value iteration span {span:e} above {tol:e}"),
    })
}

/// `max_s |g + h(s) − (Th)(s)|`.
pub fn bellman_residual(mdp: &DiscreteMdp, table: &ValueTable) -> f64 {
    bellman(mdp, &table.h)
        .iter()
        .zip(&table.h)
        .map(|((t, _), h)| (table.g + h - t).abs())
        .fold(0.0, f64::max)
}

/// Stationary policy read off a value table.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    params: SystemParams,
    n_b: usize,
    /// Action per state, indexed like [`DiscreteMdp::state_index`].
    actions: Vec<f64>,
}

/// Greedy (argmax) policy of `table`, ties broken toward the smaller action.
pub fn greedy_policy(table: &ValueTable, mdp: &DiscreteMdp) -> GreedyPolicy {
    let actions = bellman(mdp, &table.h)
        .into_iter()
        .enumerate()
        .map(|(s, (_, k))| {
            let (mask, i) = (s / mdp.n_b, s % mdp.n_b);
            mdp.actions[mdp.action_set(i, mask)][k].amount
        })
        .collect();
    GreedyPolicy {
        params: mdp.params,
        n_b: mdp.n_b,
        actions,
    }
}

impl GreedyPolicy {
    /// Action at grid state `(battery index, window mask)`.
    pub fn action_at(&self, battery_idx: usize, mask: usize) -> f64 {
        self.actions[mask * self.n_b + battery_idx]
    }
}

impl Policy for GreedyPolicy {
    /// Rounds the battery to the nearest grid level and clamps the grid
    /// action to the true battery.
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64> {
        let cap = self.params.battery_capacity;
        let step = cap / (self.n_b - 1) as f64;
        let i = ((battery / step).round() as usize).min(self.n_b - 1);
        let mask = window
            .iter()
            .enumerate()
            .filter(|(_, &e)| e >= 0.5 * cap)
            .fold(0usize, |m, (j, _)| m | (1 << j));
        Ok(self.action_at(i, mask).min(battery))
    }

    fn window(&self) -> usize {
        self.params.window
    }
}
