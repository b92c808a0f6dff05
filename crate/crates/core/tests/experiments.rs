use std::fs;

use ehpc_core::config::{ExperimentConfig, SolveKind};
use ehpc_core::experiments::*;
use ehpc_core::io::{read_csv_file, CSV_VERSION_LINE};
use ehpc_core::policy::PolicySpec;
use ehpc_core::sim::RunRecord;
use ehpc_core::SystemParams;
use tempfile::TempDir;

fn config(dir: &TempDir) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output.dir = dir.path().to_path_buf();
    cfg
}

#[test]
fn solve_lower_single_slot() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.params = SystemParams::new(100.0, 0.3, 0.5, 4).unwrap();
    cfg.solver.kind = SolveKind::Lower;
    cfg.solver.horizon = 1;
    let summary = cmd_solve(&cfg).unwrap();
    let rows: Vec<SequenceRow> = read_csv_file(&dir.path().join("solve.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].i, 1);
    assert!((rows[0].xi - 20.0).abs() < 1e-9);
    assert!(summary.kkt_residual < 1e-9);
    assert!(summary.lower_bound <= summary.upper_bound);
}

#[test]
fn solve_limit_has_width_column() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.solver.horizon = 12;
    cmd_solve(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("solve.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_VERSION_LINE));
    assert_eq!(lines.next(), Some("i,xi,width"));
    let rows: Vec<LimitRow> = read_csv_file(&dir.path().join("solve.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.width >= 0.0 && r.width < 1e-6));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(json["kind"], "limit");
}

#[test]
fn solve_upper_and_online() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.solver.kind = SolveKind::Upper;
    cfg.solver.horizon = 8;
    let up = cmd_solve(&cfg).unwrap();
    assert_eq!(up.values.len(), 8);
    cfg.params.window = 0;
    for kind in [SolveKind::Lower, SolveKind::Upper, SolveKind::Limit] {
        cfg.solver.kind = kind;
        let s = cmd_solve(&cfg).unwrap();
        assert!(s.kkt_residual < 1e-9, "{kind:?}");
    }
}

#[test]
fn fig1_small_sweep() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sweep.windows = vec![0, 1, 2, 5];
    cfg.sweep.horizons = vec![5, 20];
    let s = cmd_fig1(&cfg).unwrap();
    assert!(s.strictly_increasing);
    assert!(s.bounds_bracket);
    assert!(s.ratio_w5.unwrap() > 0.995);
    let rows: Vec<Fig1Row> = read_csv_file(&dir.path().join("fig1.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 2 + 1);
    let last = rows.last().unwrap();
    assert_eq!(last.window, "inf");
    assert_eq!(last.horizon, None);
}

#[test]
fn fig2_sequences_shift_weight_right() {
    let dir = TempDir::new().unwrap();
    let cfg = config(&dir);
    let s = cmd_fig2(&cfg).unwrap();
    assert!(s.strictly_decreasing);
    assert!(s.tail_mass.windows(2).all(|p| p[0] < p[1]), "{:?}", s.tail_mass);
    let rows: Vec<Fig2Row> = read_csv_file(&dir.path().join("fig2.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 30);
}

#[test]
fn fig3_rows_are_ordered() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sweep.horizons = vec![3, 10];
    let s = cmd_fig3(&cfg).unwrap();
    assert!(s.ordered);
    let rows: Vec<Fig3Row> = read_csv_file(&dir.path().join("fig3.csv")).unwrap();
    assert_eq!(rows.len(), 13);
}

#[test]
fn fig4_curves_start_at_zero() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sweep.omega_points = 11;
    cmd_fig4(&cfg).unwrap();
    let rows: Vec<Fig4Row> = read_csv_file(&dir.path().join("fig4.csv")).unwrap();
    assert_eq!(rows.len(), 44);
    for w in 0..=3 {
        let curve: Vec<&Fig4Row> = rows.iter().filter(|r| r.window == w).collect();
        assert_eq!(curve[0].x, 0.0);
        assert_eq!(curve[0].omega, 0.0);
        assert!(curve.windows(2).all(|p| p[1].omega > p[0].omega));
    }
}

#[test]
fn fig5_short_scan() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sweep.mcr = vec![0.1, 0.4];
    cfg.sweep.factor_horizon = 5_000;
    cfg.sweep.factor_runs = 8;
    let s = cmd_fig5(&cfg).unwrap();
    let rows: Vec<Fig5Row> = read_csv_file(&dir.path().join("fig5.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    let uniform: Vec<&Fig5Row> = rows.iter().filter(|r| r.arrival == "uniform").collect();
    assert!(uniform[0].f_general_w1 > 1.0);
    assert!(uniform[1].f_general_w1 < 1.0);
    assert!(s.crossover_uniform.is_some());
}

#[test]
fn simulate_writes_per_run_rows() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sim.horizon = 2_000;
    cfg.sim.runs = 5;
    let s = cmd_simulate(&cfg).unwrap();
    let rows: Vec<RunRecord> = read_csv_file(&dir.path().join("simulate.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(s.analytic.is_some());
    let text = fs::read_to_string(dir.path().join("simulate.csv")).unwrap();
    assert_eq!(
        text.lines().nth(1),
        Some("run,seed,T,total_reward,mean_throughput,cycles,mean_cycle_len")
    );
    cfg.sim.policy = PolicySpec::Offline { window: 2 };
    assert!(cmd_simulate(&cfg).unwrap().analytic.is_none());
}

#[test]
fn bellman_check_small_grids() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.params.window = 1;
    cfg.mdp.grids = vec![50, 100, 200];
    let r = cmd_bellman_check(&cfg).unwrap();
    assert_eq!(r.grids.len(), 3);
    assert_eq!(r.refinement_differences.len(), 2);
    assert!(r.passed(), "{r:?}");
    cfg.params.window = 0;
    assert!(cmd_bellman_check(&cfg).unwrap().passed());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(&dir);
    cfg.sim.horizon = 3_000;
    cfg.sim.runs = 6;
    cfg.sim.policy = PolicySpec::General { window: 1 };
    cfg.arrival = Some(ehpc_core::policy::ArrivalModel::Exponential { mean: 30.0 });
    cmd_simulate(&cfg).unwrap();
    let first = fs::read(dir.path().join("simulate.csv")).unwrap();
    cmd_simulate(&cfg).unwrap();
    assert_eq!(first, fs::read(dir.path().join("simulate.csv")).unwrap());
}
