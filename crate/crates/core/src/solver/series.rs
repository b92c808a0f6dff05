use crate::model::SystemParams;

const TAIL_MASS: f64 = 1e-17;
const MAX_TERMS: usize = 1_000_000;

/// Truncated geometric mixture `Σ_{k≥k₀} p(1−p)^{k−k₀} f(k)` over the
/// cycle lengths `k` a genie may reveal, with the neglected tail bracketed
/// analytically rather than dropped.
#[derive(Debug, Clone)]
pub struct GeometricTail {
    first: usize,
    weights: Vec<f64>,
    /// `(1−p)^m`, the probability mass beyond the last stored term.
    tail_mass: f64,
}

impl GeometricTail {
    pub fn new(arrival_prob: f64, first: usize) -> Self {
        assert!(first >= 1, "mixture must start at k >= 1");
        let q = 1.0 - arrival_prob;
        let terms = if q <= 0.0 {
            1
        } else {
            ((TAIL_MASS.ln() / q.ln()).ceil() as usize).clamp(1, MAX_TERMS)
        };
        let mut weights = Vec::with_capacity(terms);
        let mut mass = arrival_prob;
        for _ in 0..terms {
            weights.push(mass);
            mass *= q;
        }
        Self {
            first,
            weights,
            tail_mass: q.powi(terms as i32),
        }
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    /// `Σ_{k≥k₀} p(1−p)^{k−k₀} R'(r/k)` and a bound on its truncation error.
    pub fn mean_marginal(&self, params: &SystemParams, r: f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut k = self.first as f64;
        for &wt in &self.weights {
            acc += wt * params.reward_deriv(r / k);
            k += 1.0;
        }
        let hi = self.tail_mass * params.max_marginal();
        let lo = self.tail_mass * params.reward_deriv(r / k);
        (acc + 0.5 * (hi + lo), 0.5 * (hi - lo))
    }

    /// Derivative in `r` of [`Self::mean_marginal`]: `Σ p(1−p)^{k−k₀} R''(r/k)/k`.
    pub fn mean_curvature(&self, params: &SystemParams, r: f64) -> f64 {
        let g = params.channel_gain;
        let mut acc = 0.0;
        let mut k = self.first as f64;
        for &wt in &self.weights {
            let a = r / k;
            acc -= wt * g * params.reward_deriv(a) / (1.0 + g * a) / k;
            k += 1.0;
        }
        acc
    }

    /// `Σ_{k≥k₀} p(1−p)^{k−k₀} k·R(r/k)` and a bound on its truncation error.
    pub fn mean_uniform_reward(&self, params: &SystemParams, r: f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut k = self.first as f64;
        for &wt in &self.weights {
            acc += wt * k * params.reward(r / k);
            k += 1.0;
        }
        let hi = self.tail_mass * params.max_marginal() * r;
        let lo = self.tail_mass * k * params.reward(r / k);
        (acc + 0.5 * (hi + lo), 0.5 * (hi - lo))
    }
}
