//! One function per CLI command. Each writes its CSV and JSON outputs under
//! `config.output.dir` and returns the summary it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SolveKind};
use crate::error::{Error, Result};
use crate::io::{write_csv_file, write_json_file};
use crate::mdp::{bellman_residual, build_mdp, relative_value_iteration};
use crate::model::SystemParams;
use crate::policy::{omega_lower, AnyPolicy, ArrivalModel, GeneralPolicy, OfflinePolicy, Policy, PolicySpec};
use crate::sim::{simulate, RunRecord, SimConfig};
use crate::solver::{
    offline_throughput, sandwich_at, solve_lower, solve_online_w0, solve_upper, solve_w0_lower, solve_w0_upper,
    throughput_inf, throughput_lower_n, throughput_sandwich, throughput_upper_n, xi_star_with_bounds, Sandwich,
    ThroughputEstimate, XiSequence,
};

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(name)
}

fn eps(cfg: &ExperimentConfig, params: &SystemParams) -> f64 {
    cfg.solver.eps_rel * params.battery_capacity
}

/// `Γ*` bracketed to within `cfg.solver.gap`.
fn optimal_throughput(cfg: &ExperimentConfig, params: &SystemParams) -> Result<Sandwich> {
    throughput_sandwich(params, cfg.solver.gap, cfg.solver.n_cap)
}

/// First `len` entries of the optimal sequence with their sandwich widths.
fn limit_sequence(cfg: &ExperimentConfig, params: &SystemParams, len: usize) -> Result<(XiSequence, Vec<f64>)> {
    if params.window == 0 {
        let xi = solve_online_w0(params, cfg.solver.kkt_tol)?;
        let width = xi.elementwise_error.iter().map(|e| 2.0 * e).collect();
        return Ok((xi, width));
    }
    let (xi, s) = xi_star_with_bounds(params, eps(cfg, params), Some(len), cfg.solver.n_cap)?;
    let width = (0..xi.len())
        .map(|i| (s.lower.values[i] - s.upper.values[i]).max(0.0))
        .collect();
    Ok((xi, width))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRow {
    pub i: usize,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub i: usize,
    pub xi: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub kind: SolveKind,
    pub params: SystemParams,
    pub horizon: usize,
    pub values: Vec<f64>,
    pub throughput: ThroughputEstimate,
    pub kkt_residual: f64,
    /// Certified bracket on `Γ*` at the same horizon.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap_bound: f64,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<SolveSummary> {
    let params = cfg.params;
    let n = cfg.solver.horizon;
    let tol = cfg.solver.kkt_tol;
    let w0 = params.window == 0;
    let bracket = sandwich_at(&params, n, tol)?;
    let csv = out_path(cfg, "solve.csv");
    let (seq, throughput) = match cfg.solver.kind {
        SolveKind::Lower => {
            let seq = if w0 {
                solve_w0_lower(&params, n, tol)?
            } else {
                solve_lower(&params, n, tol)?
            };
            let t = throughput_lower_n(&params, &seq.values)?;
            write_sequence(&csv, &seq.values)?;
            (seq, t)
        }
        SolveKind::Upper => {
            let seq = if w0 {
                solve_w0_upper(&params, n, tol)?
            } else {
                solve_upper(&params, n, tol)?
            };
            let t = throughput_upper_n(&params, &seq.values)?;
            write_sequence(&csv, &seq.values)?;
            (seq, t)
        }
        SolveKind::Limit => {
            let (seq, width) = limit_sequence(cfg, &params, n)?;
            let t = throughput_inf(&seq)?;
            let rows: Vec<LimitRow> = seq
                .values
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (&xi, &width))| LimitRow { i: i + 1, xi, width })
                .collect();
            write_csv_file(&csv, &rows)?;
            (seq, t)
        }
    };
    let json = out_path(cfg, "solve.json");
    let summary = SolveSummary {
        kind: cfg.solver.kind,
        params,
        horizon: n,
        kkt_residual: seq.kkt_residual,
        values: seq.values,
        throughput,
        lower_bound: bracket.lower_throughput.value,
        upper_bound: bracket.upper_throughput.value,
        gap_bound: bracket.gap_bound,
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

fn write_sequence(path: &Path, values: &[f64]) -> Result<()> {
    let rows: Vec<SequenceRow> = values
        .iter()
        .enumerate()
        .map(|(i, &xi)| SequenceRow { i: i + 1, xi })
        .collect();
    write_csv_file(path, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    /// Window size, or `inf` for the offline limit.
    pub window: String,
    pub horizon: Option<usize>,
    pub gamma_star: f64,
    pub gamma_upper: Option<f64>,
    pub gamma_lower: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Summary {
    pub windows: Vec<usize>,
    pub gamma_star: Vec<f64>,
    /// Certified half-width of each `Γ*` entry.
    pub gamma_star_error: Vec<f64>,
    pub offline: f64,
    pub strictly_increasing: bool,
    pub bounds_bracket: bool,
    /// `Γ*(w = 5) / Γ*(offline)` when 5 is among the windows.
    pub ratio_w5: Option<f64>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_fig1(cfg: &ExperimentConfig) -> Result<Fig1Summary> {
    let per_window = cfg
        .sweep
        .windows
        .par_iter()
        .map(|&w| {
            let params = cfg.params.with_window(w);
            let star = optimal_throughput(cfg, &params)?;
            let bounds = cfg
                .sweep
                .horizons
                .iter()
                .map(|&n| sandwich_at(&params, n, cfg.solver.kkt_tol))
                .collect::<Result<Vec<_>>>()?;
            Ok((w, star, bounds))
        })
        .collect::<Result<Vec<_>>>()?;
    let offline = offline_throughput(&cfg.params)?.value;

    let mut rows = Vec::new();
    let mut bounds_bracket = true;
    for (w, star, bounds) in &per_window {
        let g = star.midpoint();
        let half = 0.5 * star.throughput_gap().max(0.0);
        for s in bounds {
            let (lo, hi) = (s.lower_throughput.value, s.upper_throughput.value);
            bounds_bracket &= lo <= g + half + 1e-12 && g - half <= hi + 1e-12;
            rows.push(Fig1Row {
                window: w.to_string(),
                horizon: Some(s.horizon),
                gamma_star: g,
                gamma_upper: Some(hi),
                gamma_lower: Some(lo),
            });
        }
    }
    rows.push(Fig1Row {
        window: "inf".into(),
        horizon: None,
        gamma_star: offline,
        gamma_upper: None,
        gamma_lower: None,
    });
    let gamma_star: Vec<f64> = per_window.iter().map(|(_, s, _)| s.midpoint()).collect();
    let gamma_star_error: Vec<f64> = per_window
        .iter()
        .map(|(_, s, _)| 0.5 * s.throughput_gap().max(0.0))
        .collect();
    let windows: Vec<usize> = per_window.iter().map(|(w, _, _)| *w).collect();
    let strictly_increasing = windows.windows(2).all(|p| p[0] < p[1]) && gamma_star.windows(2).all(|p| p[0] < p[1]);
    let ratio_w5 = windows.iter().position(|&w| w == 5).map(|i| gamma_star[i] / offline);

    let csv = out_path(cfg, "fig1.csv");
    let json = out_path(cfg, "fig1.json");
    write_csv_file(&csv, &rows)?;
    let summary = Fig1Summary {
        windows,
        gamma_star,
        gamma_star_error,
        offline,
        strictly_increasing,
        bounds_bracket,
        ratio_w5,
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub window: usize,
    pub i: usize,
    pub xi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Summary {
    pub windows: Vec<usize>,
    /// `Σ_{i>10} ξ*_i` over the listed entries, per window.
    pub tail_mass: Vec<f64>,
    pub strictly_decreasing: bool,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_fig2(cfg: &ExperimentConfig) -> Result<Fig2Summary> {
    let len = cfg.sweep.sequence_len;
    let seqs = cfg
        .sweep
        .sequence_windows
        .par_iter()
        .map(|&w| limit_sequence(cfg, &cfg.params.with_window(w), len).map(|(xi, _)| (w, xi.values)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Fig2Row> = seqs
        .iter()
        .flat_map(|(w, v)| {
            v.iter().enumerate().map(move |(i, &xi)| Fig2Row {
                window: *w,
                i: i + 1,
                xi,
            })
        })
        .collect();
    let csv = out_path(cfg, "fig2.csv");
    let json = out_path(cfg, "fig2.json");
    write_csv_file(&csv, &rows)?;
    let summary = Fig2Summary {
        windows: seqs.iter().map(|(w, _)| *w).collect(),
        tail_mass: seqs.iter().map(|(_, v)| v.iter().skip(10).sum()).collect(),
        strictly_decreasing: seqs.iter().all(|(_, v)| v.windows(2).all(|p| p[1] < p[0])),
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub horizon: usize,
    pub i: usize,
    /// Genie-bound entry, below the optimum.
    pub upper_program: f64,
    pub optimal: f64,
    /// Forbidden-tail entry, above the optimum.
    pub lower_program: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3Summary {
    pub window: usize,
    pub horizons: Vec<usize>,
    pub ordered: bool,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_fig3(cfg: &ExperimentConfig) -> Result<Fig3Summary> {
    let params = cfg.params.with_window(cfg.sweep.sandwich_window);
    let longest = cfg.sweep.horizons.iter().copied().max().unwrap_or(1);
    let (star, _) = limit_sequence(cfg, &params, longest)?;
    let sandwiches = cfg
        .sweep
        .horizons
        .par_iter()
        .map(|&n| sandwich_at(&params, n, cfg.solver.kkt_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut ordered = true;
    for s in &sandwiches {
        for i in 0..s.horizon {
            let row = Fig3Row {
                horizon: s.horizon,
                i: i + 1,
                upper_program: s.upper.values[i],
                optimal: star.values[i],
                lower_program: s.lower.values[i],
            };
            let slack = star.elementwise_error.get(i).copied().unwrap_or(0.0) + 1e-12;
            ordered &= row.upper_program <= row.optimal + slack && row.optimal <= row.lower_program + slack;
            rows.push(row);
        }
    }
    let csv = out_path(cfg, "fig3.csv");
    let json = out_path(cfg, "fig3.json");
    write_csv_file(&csv, &rows)?;
    let summary = Fig3Summary {
        window: params.window,
        horizons: cfg.sweep.horizons.clone(),
        ordered,
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub window: usize,
    pub x: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Summary {
    pub windows: Vec<usize>,
    pub prob: f64,
    pub rows: usize,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_fig4(cfg: &ExperimentConfig) -> Result<Fig4Summary> {
    let cap = cfg.params.battery_capacity;
    let points = cfg.sweep.omega_points;
    let prob = cfg.sweep.omega_prob;
    let grid: Vec<(usize, f64)> = cfg
        .sweep
        .omega_windows
        .iter()
        .flat_map(|&w| (0..points).map(move |k| (w, cap * k as f64 / (points - 1) as f64)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(w, x)| {
            let params = cfg.params.with_prob(prob).with_window(w);
            Ok(Fig4Row {
                window: w,
                x,
                omega: omega_lower(&params, x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = out_path(cfg, "fig4.csv");
    let json = out_path(cfg, "fig4.json");
    write_csv_file(&csv, &rows)?;
    let summary = Fig4Summary {
        windows: cfg.sweep.omega_windows.clone(),
        prob,
        rows: rows.len(),
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig5Row {
    pub arrival: String,
    pub mcr: f64,
    /// Uniform support end or exponential mean.
    pub parameter: f64,
    pub baseline: f64,
    pub f_general_w1: f64,
    pub f_offline_w2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig5Summary {
    /// MCR at which the factor of the one-slot general policy first drops below 1.
    pub crossover_uniform: Option<f64>,
    pub crossover_exponential: Option<f64>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

/// Factors of the one-slot general policy and two-slot offline policy against
/// the one-slot offline policy, with common random numbers, per arrival law.
pub fn factor_scan(cfg: &ExperimentConfig, family: &str) -> Result<Vec<Fig5Row>> {
    let cap = cfg.params.battery_capacity;
    let params = cfg.params.with_window(1);
    cfg.sweep
        .mcr
        .iter()
        .map(|&mcr| {
            let model = match family {
                "uniform" => ArrivalModel::uniform_with_mcr(mcr, cap)?,
                "exponential" => ArrivalModel::exponential_with_mcr(mcr, cap)?,
                other => return Err(Error::Config(format!("unknown arrival family {other}"))),
            };
            let parameter = match model {
                ArrivalModel::Uniform { max } => max,
                ArrivalModel::Exponential { mean } => mean,
                _ => unreachable!(),
            };
            let sim = SimConfig::new(
                params,
                model.clone(),
                cfg.sweep.factor_horizon,
                cfg.sweep.factor_runs,
                cfg.sweep.factor_seed,
            );
            let baseline = simulate(&OfflinePolicy::new(params)?, &sim)?.mean_throughput;
            if !(baseline > 0.0) {
                return Err(Error::Domain("baseline throughput is zero".into()));
            }
            let general = simulate(&GeneralPolicy::new(params, &model)?, &sim)?.mean_throughput;
            let offline2 = simulate(&OfflinePolicy::new(params.with_window(2))?, &sim)?.mean_throughput;
            Ok(Fig5Row {
                arrival: family.to_string(),
                mcr,
                parameter,
                baseline,
                f_general_w1: general / baseline,
                f_offline_w2: offline2 / baseline,
            })
        })
        .collect()
}

/// Linear interpolation of the first downward crossing of 1.
pub fn crossover(rows: &[Fig5Row]) -> Option<f64> {
    rows.windows(2).find_map(|p| {
        let (a, b) = (p[0].f_general_w1 - 1.0, p[1].f_general_w1 - 1.0);
        (a >= 0.0 && b < 0.0).then(|| p[0].mcr + (p[1].mcr - p[0].mcr) * a / (a - b))
    })
}

pub fn cmd_fig5(cfg: &ExperimentConfig) -> Result<Fig5Summary> {
    let uniform = factor_scan(cfg, "uniform")?;
    let exponential = factor_scan(cfg, "exponential")?;
    let csv = out_path(cfg, "fig5.csv");
    let json = out_path(cfg, "fig5.json");
    let rows: Vec<Fig5Row> = uniform.iter().chain(&exponential).cloned().collect();
    write_csv_file(&csv, &rows)?;
    let summary = Fig5Summary {
        crossover_uniform: crossover(&uniform),
        crossover_exponential: crossover(&exponential),
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub policy: PolicySpec,
    pub arrival: ArrivalModel,
    pub mean_throughput: f64,
    pub stderr: f64,
    pub mean_cycle_len: f64,
    pub cycles: usize,
    /// Renewal-formula throughput when the policy is the Bernoulli-optimal one.
    pub analytic: Option<ThroughputEstimate>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateSummary> {
    let model = cfg.arrival_model();
    let policy = cfg.sim.policy.build(&cfg.params, &model)?;
    let mut sim = SimConfig::new(cfg.params, model.clone(), cfg.sim.horizon, cfg.sim.runs, cfg.sim.seed);
    sim.initial_battery = cfg.sim.initial_battery;
    let res = simulate(&policy, &sim)?;
    let analytic = match &policy {
        AnyPolicy::Bernoulli(_) if policy.window() > 0 => {
            let (xi, _) = xi_star_with_bounds(&cfg.params, eps(cfg, &cfg.params), None, cfg.solver.n_cap)?;
            Some(throughput_inf(&xi)?)
        }
        AnyPolicy::Bernoulli(_) => Some(throughput_inf(&solve_online_w0(&cfg.params, cfg.solver.kkt_tol)?)?),
        _ => None,
    };
    let csv = out_path(cfg, "simulate.csv");
    let json = out_path(cfg, "simulate.json");
    write_csv_file::<RunRecord>(&csv, &res.records)?;
    let summary = SimulateSummary {
        policy: cfg.sim.policy.clone(),
        arrival: model,
        mean_throughput: res.mean_throughput,
        stderr: res.stderr,
        mean_cycle_len: res.mean_cycle_len,
        cycles: res.cycles,
        analytic,
        files: vec![csv, json.clone()],
    };
    write_json_file(&json, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub n_b: usize,
    pub n_a: usize,
    pub g: f64,
    pub span: f64,
    pub iterations: usize,
    pub bellman_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BellmanReport {
    pub params: SystemParams,
    pub grids: Vec<GridResult>,
    /// `|g(n_{k+1}) − g(n_k)|` over successive grids.
    pub refinement_differences: Vec<f64>,
    pub refinement_shrinking: bool,
    /// Certified interval containing `Γ*`.
    pub interval: (f64, f64),
    pub midpoint: f64,
    /// `|g − midpoint|` for the finest grid.
    pub distance: f64,
    pub tolerance: f64,
    pub verdict: String,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl BellmanReport {
    pub fn passed(&self) -> bool {
        self.verdict == "PASS"
    }
}

pub fn cmd_bellman_check(cfg: &ExperimentConfig) -> Result<BellmanReport> {
    let params = cfg.params;
    let m = &cfg.mdp;
    let mut grids = Vec::with_capacity(m.grids.len());
    for &n_b in &m.grids {
        let n_a = m.actions.unwrap_or(n_b);
        let mdp = build_mdp(&params, n_b, n_a)?;
        let table = relative_value_iteration(&mdp, m.tol, m.max_iters)?;
        grids.push(GridResult {
            n_b,
            n_a,
            g: table.g,
            span: table.span,
            iterations: table.iterations,
            bellman_residual: bellman_residual(&mdp, &table),
        });
    }
    let interval = if params.window == 0 {
        let t = throughput_inf(&solve_online_w0(&params, cfg.solver.kkt_tol)?)?;
        (t.value, t.value + t.error_bound)
    } else {
        let s = optimal_throughput(cfg, &params)?;
        (
            s.lower_throughput.value,
            s.upper_throughput.value + s.upper_throughput.error_bound,
        )
    };
    let midpoint = 0.5 * (interval.0 + interval.1);
    let g = grids.last().map(|r| r.g).unwrap_or(f64::NAN);
    let distance = (g - midpoint).abs();
    let refinement_differences: Vec<f64> = grids.windows(2).map(|p| (p[1].g - p[0].g).abs()).collect();
    let refinement_shrinking = refinement_differences.windows(2).all(|d| d[1] < d[0]);
    let ok = distance < m.tolerance && refinement_shrinking;
    let json = out_path(cfg, "bellman_check.json");
    let report = BellmanReport {
        params,
        grids,
        refinement_differences,
        refinement_shrinking,
        interval,
        midpoint,
        distance,
        tolerance: m.tolerance,
        verdict: if ok { "PASS" } else { "FAIL" }.into(),
        files: vec![json.clone()],
    };
    write_json_file(&json, &report)?;
    Ok(report)
}
