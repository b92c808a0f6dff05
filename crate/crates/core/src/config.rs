//! JSON experiment configuration. Every section and field is optional and
//! falls back to the reference setting `B = 100, p = 0.3, γ = 0.5`; unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::policy::{ArrivalModel, PolicySpec};
use crate::solver::{DEFAULT_KKT_TOL, DEFAULT_N_CAP, DEFAULT_XI_EPS_REL};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    /// Arrival law for simulation; Bernoulli with `params.arrival_prob` when absent.
    pub arrival: Option<ArrivalModel>,
    pub solver: SolverConfig,
    pub sim: SimSettings,
    pub sweep: SweepConfig,
    pub mdp: MdpConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveKind {
    Lower,
    Upper,
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolveKind,
    /// Horizon `N` of the bound programs; also the number of reported limit entries.
    pub horizon: usize,
    pub kkt_tol: f64,
    /// Elementwise sandwich width for limit sequences, relative to `B`.
    pub eps_rel: f64,
    /// Target throughput gap when bracketing `Γ*`.
    pub gap: f64,
    pub n_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolveKind::Limit,
            horizon: 30,
            kkt_tol: DEFAULT_KKT_TOL,
            eps_rel: DEFAULT_XI_EPS_REL,
            gap: 1e-9,
            n_cap: DEFAULT_N_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub initial_battery: Option<f64>,
    pub policy: PolicySpec,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            runs: 50,
            seed: 1,
            initial_battery: None,
            policy: PolicySpec::Bernoulli,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Lookahead windows for the throughput-versus-window table.
    pub windows: Vec<usize>,
    /// Horizons `N` at which the bounds are tabulated.
    pub horizons: Vec<usize>,
    /// Windows whose optimal sequences are listed.
    pub sequence_windows: Vec<usize>,
    /// Entries listed per sequence.
    pub sequence_len: usize,
    /// Window of the sandwich-versus-`N` comparison.
    pub sandwich_window: usize,
    pub omega_windows: Vec<usize>,
    pub omega_prob: f64,
    pub omega_points: usize,
    /// Mean charging ratios scanned for the multiplicative factors.
    pub mcr: Vec<f64>,
    pub factor_horizon: usize,
    pub factor_runs: usize,
    pub factor_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            windows: (0..=10).collect(),
            horizons: vec![5, 10, 15, 20, 25, 30],
            sequence_windows: vec![1, 2, 4, 8],
            sequence_len: 30,
            sandwich_window: 4,
            omega_windows: vec![0, 1, 2, 3],
            omega_prob: 0.1,
            omega_points: 101,
            mcr: (1..=19).map(|i| 0.025 * i as f64).collect(),
            factor_horizon: 10_000,
            factor_runs: 20,
            factor_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpConfig {
    /// Battery grid sizes; the last one is the reported value.
    pub grids: Vec<usize>,
    /// Action levels per state; equal to the battery grid size when absent.
    pub actions: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    /// Allowed distance between `g` and the certified interval.
    pub tolerance: f64,
}

impl Default for MdpConfig {
    fn default() -> Self {
        Self {
            grids: vec![200, 400, 800],
            actions: None,
            tol: 1e-9,
            max_iters: 100_000,
            tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Arrival law used by simulation commands.
    pub fn arrival_model(&self) -> ArrivalModel {
        self.arrival.clone().unwrap_or(ArrivalModel::Bernoulli {
            prob: self.params.arrival_prob,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.arrival_model()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.solver;
        if s.horizon == 0 || s.n_cap == 0 {
            return bad("solver.horizon and solver.n_cap must be positive".into());
        }
        for (name, v) in [("kkt_tol", s.kkt_tol), ("eps_rel", s.eps_rel), ("gap", s.gap)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("solver.{name} must be positive, got {v}"));
            }
        }
        if self.sim.horizon == 0 || self.sim.runs == 0 {
            return bad("sim.horizon and sim.runs must be positive".into());
        }
        if let Some(b) = self.sim.initial_battery {
            if !(b >= 0.0 && b <= self.params.battery_capacity) {
                return bad(format!("sim.initial_battery {b} outside [0, B]"));
            }
        }
        let sw = &self.sweep;
        if sw.horizons.contains(&0) || sw.sequence_len == 0 || sw.sandwich_window == 0 {
            return bad("sweep horizons, sequence_len and sandwich_window must be positive".into());
        }
        if sw.sequence_windows.contains(&0) {
            return bad("sweep.sequence_windows entries must be at least 1".into());
        }
        if !(sw.omega_prob > 0.0 && sw.omega_prob < 1.0) || sw.omega_points < 2 {
            return bad("sweep.omega_prob must lie in (0, 1) and omega_points be at least 2".into());
        }
        if sw.mcr.iter().any(|&m| !(m > 0.0 && m < 1.0)) {
            return bad("sweep.mcr entries must lie in (0, 1)".into());
        }
        if sw.factor_horizon == 0 || sw.factor_runs == 0 {
            return bad("sweep.factor_horizon and factor_runs must be positive".into());
        }
        let m = &self.mdp;
        if m.grids.is_empty() || m.grids.iter().any(|&n| n < 2) || m.actions.is_some_and(|a| a < 2) {
            return bad("mdp grids and actions must be at least 2".into());
        }
        if !(m.tol > 0.0 && m.tolerance > 0.0) || m.max_iters == 0 {
            return bad("mdp.tol, mdp.tolerance and mdp.max_iters must be positive".into());
        }
        Ok(())
    }
}
