//! Optimal power control for an energy-harvesting transmitter that can see a
//! fixed window of future energy arrivals.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mdp;
pub mod model;
pub mod policy;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{distance, reward, reward_deriv, reward_deriv_inv, LookaheadWindow, PolicyState, SystemParams};
