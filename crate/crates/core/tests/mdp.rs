mod common;

use common::reference;
use ehpc_core::mdp::*;
use ehpc_core::policy::ArrivalModel;
use ehpc_core::sim::{simulate, SimConfig};
use ehpc_core::solver::{throughput_sandwich, DEFAULT_N_CAP};
use ehpc_core::{Error, SystemParams};

const TOL: f64 = 1e-9;

fn solve(pr: &SystemParams, n: usize) -> (DiscreteMdp, ValueTable) {
    let mdp = build_mdp(pr, n, n).unwrap();
    let table = relative_value_iteration(&mdp, TOL, 10_000).unwrap();
    (mdp, table)
}

#[test]
fn near_certain_recharge_gives_full_rate() {
    let pr = SystemParams::new(100.0, 1.0 - 1e-6, 0.5, 1).unwrap();
    let (_, table) = solve(&pr, 21);
    assert!((table.g - pr.reward(100.0)).abs() < 1e-4, "{}", table.g);
}

#[test]
fn value_iteration_agrees_with_sandwich() {
    let pr = reference(1);
    let s = throughput_sandwich(&pr, 1e-9, DEFAULT_N_CAP).unwrap();
    let (mdp, table) = solve(&pr, 200);
    assert!((table.g - s.midpoint()).abs() < 1e-2);
    assert!(table.span < TOL * (1.0 + table.g.abs()));
    assert!(bellman_residual(&mdp, &table) < TOL * (1.0 + table.g.abs()));
}

#[test]
fn online_case_agrees_with_sandwich() {
    let pr = reference(0);
    let s = throughput_sandwich(&pr, 1e-9, DEFAULT_N_CAP).unwrap();
    let (_, table) = solve(&pr, 200);
    assert!((table.g - s.midpoint()).abs() < 1e-2, "{} vs {}", table.g, s.midpoint());
}

#[test]
fn refinement_differences_shrink() {
    let pr = reference(1);
    let g: Vec<f64> = [100, 200, 400].iter().map(|&n| solve(&pr, n).1.g).collect();
    assert!((g[2] - g[1]).abs() < (g[1] - g[0]).abs());
}

#[test]
fn relative_values_increase_with_battery() {
    let pr = reference(2);
    let (mdp, table) = solve(&pr, 60);
    for mask in 0..mdp.windows() {
        for i in 1..mdp.n_b {
            let lo = table.h[mdp.state_index(i - 1, mask)];
            let hi = table.h[mdp.state_index(i, mask)];
            assert!(hi >= lo - 1e-9, "mask {mask} level {i}");
        }
    }
}

#[test]
fn greedy_policy_structure() {
    let pr = reference(2);
    let (mdp, table) = solve(&pr, 100);
    let greedy = greedy_policy(&table, &mdp);
    let top = mdp.n_b - 1;
    let step = pr.battery_capacity / (mdp.n_a - 1) as f64;
    for mask in 0..mdp.windows() {
        assert_eq!(greedy.action_at(0, mask), 0.0);
    }
    // Arrival next slot: spend it all.
    assert!((greedy.action_at(top, 0b01) - 100.0).abs() <= step);
    assert!((greedy.action_at(top, 0b11) - 100.0).abs() <= step);
    // Arrival two slots ahead: half now.
    assert!((greedy.action_at(top, 0b10) - 50.0).abs() <= step);
}

#[test]
fn greedy_policy_earns_g_in_simulation() {
    let pr = reference(1);
    let (mdp, table) = solve(&pr, 200);
    let greedy = greedy_policy(&table, &mdp);
    let res = simulate(
        &greedy,
        &SimConfig::new(pr, ArrivalModel::Bernoulli { prob: 0.3 }, 50_000, 20, 5),
    )
    .unwrap();
    let tol = (3.0 * res.stderr).max(2e-3);
    assert!(
        (res.mean_throughput - table.g).abs() < tol,
        "{} vs {}",
        res.mean_throughput,
        table.g
    );
}

#[test]
fn window_shift_appends_fresh_arrival_only() {
    let pr = reference(1);
    let mdp = build_mdp(&pr, 3, 3).unwrap();
    // Full battery with an arrival next slot: the next window is the fresh draw.
    for k in 0..mdp.actions(2, 1).len() {
        let t = mdp.transitions(2, 1, k);
        let fresh: f64 = t.iter().filter(|(s, _)| *s / 3 == 1).map(|(_, p)| p).sum();
        assert!((fresh - 0.3).abs() < 1e-12);
    }
}

#[test]
fn non_convergence_is_reported() {
    let pr = reference(2);
    let mdp = build_mdp(&pr, 50, 50).unwrap();
    assert!(matches!(
        relative_value_iteration(&mdp, 1e-12, 2),
        Err(Error::NonConvergence { iters: 2, .. })
    ));
    assert!(relative_value_iteration(&mdp, 0.0, 10).is_err());
    assert!(build_mdp(&pr.with_window(13), 10, 10).is_err());
}
