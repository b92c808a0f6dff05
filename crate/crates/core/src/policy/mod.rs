//! Stationary power-control policies: the Bernoulli-optimal lookahead policy,
//! the receding-horizon offline allocator and their general-arrival blend.

mod arrival;
mod bernoulli;
mod general;
mod offline;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{PolicyState, SystemParams};

pub use arrival::{ArrivalModel, ArrivalSampler};
pub use bernoulli::BernoulliPolicy;
pub use general::{omega_lower, GeneralPolicy, OmegaTable, OMEGA_LEVELS, OMEGA_SPAN};
pub use offline::{offline_allocate, OfflinePolicy};

/// A deterministic decision rule. Implementations may keep per-trajectory
/// counters, so one instance drives one trajectory at a time.
pub trait Policy {
    /// Energy to spend this slot given the battery level and the visible arrivals.
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64>;

    /// Clears per-trajectory state before a new run.
    fn reset(&mut self) {}

    /// Lookahead window the policy expects.
    fn window(&self) -> usize;

    fn act_state(&mut self, state: &PolicyState) -> Result<f64> {
        self.act(state.battery, state.window.as_slice())
    }
}

/// Policy choice as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Optimal policy for Bernoulli arrivals.
    Bernoulli,
    /// General-arrival extension with lookahead `window`.
    General { window: usize },
    /// Receding-horizon offline allocation with lookahead `window`.
    Offline { window: usize },
}

impl PolicySpec {
    pub fn build(&self, params: &SystemParams, model: &ArrivalModel) -> Result<AnyPolicy> {
        Ok(match self {
            Self::Bernoulli => {
                match model {
                    ArrivalModel::Bernoulli { prob } if *prob == params.arrival_prob => {}
                    _ => {
                        return Err(domain(
                            "the Bernoulli policy needs Bernoulli arrivals with prob = arrival_prob",
                        ))
                    }
                }
                AnyPolicy::Bernoulli(BernoulliPolicy::solve(*params)?)
            }
            Self::General { window } => AnyPolicy::General(GeneralPolicy::new(params.with_window(*window), model)?),
            Self::Offline { window } => AnyPolicy::Offline(OfflinePolicy::new(params.with_window(*window))?),
        })
    }
}

/// Closed set of policies, cheap to clone for parallel runs.
#[derive(Debug, Clone)]
pub enum AnyPolicy {
    Bernoulli(BernoulliPolicy),
    General(GeneralPolicy),
    Offline(OfflinePolicy),
}

impl Policy for AnyPolicy {
    fn act(&mut self, battery: f64, window: &[f64]) -> Result<f64> {
        match self {
            Self::Bernoulli(p) => p.act(battery, window),
            Self::General(p) => p.act(battery, window),
            Self::Offline(p) => p.act(battery, window),
        }
    }

    fn reset(&mut self) {
        match self {
            Self::Bernoulli(p) => p.reset(),
            Self::General(p) => p.reset(),
            Self::Offline(p) => p.reset(),
        }
    }

    fn window(&self) -> usize {
        match self {
            Self::Bernoulli(p) => p.window(),
            Self::General(p) => p.window(),
            Self::Offline(p) => p.window(),
        }
    }
}
