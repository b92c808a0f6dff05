use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// I.i.d. energy arrival law. Samples are clipped at the battery capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalModel {
    /// A full charge `B` with probability `prob`, otherwise nothing.
    Bernoulli {
        prob: f64,
    },
    /// Uniform on `[0, max]`.
    Uniform {
        max: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Finite law: `values[i]` with probability proportional to `weights[i]`.
    Custom {
        values: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl ArrivalModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Bernoulli { prob } => *prob > 0.0 && *prob < 1.0,
            Self::Uniform { max } => max.is_finite() && *max > 0.0,
            Self::Exponential { mean } => mean.is_finite() && *mean > 0.0,
            Self::Custom { values, weights } => {
                !values.is_empty()
                    && values.len() == weights.len()
                    && values.iter().all(|v| v.is_finite() && *v >= 0.0)
                    && weights.iter().all(|w| w.is_finite() && *w >= 0.0)
                    && values.iter().zip(weights).any(|(v, w)| *v > 0.0 && *w > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid or degenerate arrival model {self:?}")))
        }
    }

    /// Binds the model to a capacity for sampling.
    pub fn sampler(&self, capacity: f64) -> Result<ArrivalSampler> {
        self.validate()?;
        let inner = match self {
            Self::Bernoulli { prob } => Inner::Bernoulli(*prob),
            Self::Uniform { max } => {
                Inner::Uniform(Uniform::new_inclusive(0.0, *max).map_err(|e| domain(e.to_string()))?)
            }
            Self::Exponential { mean } => Inner::Exponential(Exp::new(1.0 / mean).map_err(|e| domain(e.to_string()))?),
            Self::Custom { values, weights } => Inner::Custom(
                values.clone(),
                WeightedIndex::new(weights).map_err(|e| domain(e.to_string()))?,
            ),
        };
        Ok(ArrivalSampler { inner, capacity })
    }

    /// Mean-to-capacity ratio `E[min{E, B}]/B`, clamped into `(0, 1)`.
    pub fn mcr(&self, capacity: f64) -> Result<f64> {
        self.validate()?;
        if !(capacity > 0.0) {
            return Err(domain(format!("capacity must be positive, got {capacity}")));
        }
        let b = capacity;
        let clipped_mean = match self {
            Self::Bernoulli { prob } => prob * b,
            Self::Uniform { max } => {
                let c = *max;
                if c <= b {
                    c / 2.0
                } else {
                    b - b * b / (2.0 * c)
                }
            }
            Self::Exponential { mean } => mean * (1.0 - (-b / mean).exp()),
            Self::Custom { values, weights } => {
                let total: f64 = weights.iter().sum();
                values.iter().zip(weights).map(|(v, w)| v.min(b) * w).sum::<f64>() / total
            }
        };
        let edge = crate::model::PROB_EDGE * 1e3;
        Ok((clipped_mean / b).clamp(edge, 1.0 - edge))
    }

    /// Uniform law on `[0, c]` whose MCR at `capacity` equals `mcr`.
    pub fn uniform_with_mcr(mcr: f64, capacity: f64) -> Result<Self> {
        check_target(mcr, capacity)?;
        let max = if mcr <= 0.5 {
            2.0 * mcr * capacity
        } else {
            capacity / (2.0 * (1.0 - mcr))
        };
        Ok(Self::Uniform { max })
    }

    /// Exponential law whose MCR at `capacity` equals `mcr`, found by bisection
    /// on the mean (the MCR increases with it).
    pub fn exponential_with_mcr(mcr: f64, capacity: f64) -> Result<Self> {
        check_target(mcr, capacity)?;
        let ratio = |mean: f64| mean * (1.0 - (-capacity / mean).exp()) / capacity;
        let (mut lo, mut hi) = (mcr * capacity, capacity);
        while ratio(hi) < mcr {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ratio(mid) < mcr {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(Self::Exponential { mean: 0.5 * (lo + hi) })
    }

    /// Whether every sample is either `0` or a full charge.
    pub fn is_bernoulli(&self) -> bool {
        matches!(self, Self::Bernoulli { .. })
    }
}

fn check_target(mcr: f64, capacity: f64) -> Result<()> {
    if !(mcr > 0.0 && mcr < 1.0) {
        return Err(domain(format!("target MCR must lie in (0, 1), got {mcr}")));
    }
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(domain(format!("capacity must be positive, got {capacity}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Inner {
    Bernoulli(f64),
    Uniform(Uniform<f64>),
    Exponential(Exp<f64>),
    Custom(Vec<f64>, WeightedIndex<f64>),
}

/// An [`ArrivalModel`] bound to a battery capacity.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    inner: Inner,
    capacity: f64,
}

impl ArrivalSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let raw = match &self.inner {
            Inner::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    self.capacity
                } else {
                    0.0
                }
            }
            Inner::Uniform(u) => u.sample(rng),
            Inner::Exponential(e) => e.sample(rng),
            Inner::Custom(values, index) => values[index.sample(rng)],
        };
        raw.min(self.capacity)
    }
}
