use cmfbound::local_caprini::{solve_local, F0};
use cmfbound::oracle::{dual_bound_scan, grid_local_solve, left_unbounded_demo, log_t_grid, nystrom_solve};
use cmfbound::phi_solver::solve_psi;
use proptest::prelude::*;

#[test]
fn spectral_and_nystrom_agree() {
    for x0 in [1.0, 1.5, 2.0, 5.0] {
        for veps in [1e-4, 1e-3, 1e-2] {
            let sp = solve_psi(x0, veps).unwrap();
            let ny = nystrom_solve(x0, veps * veps, 400).unwrap();
            assert!((ny.psi_at_x0 / sp.psi_at_x0 - 1.0).abs() <= 1e-4, "x0 = {x0}, veps = {veps}");
            assert!((ny.norm_l2 / sp.norm_l2 - 1.0).abs() <= 1e-4, "x0 = {x0}, veps = {veps}");
        }
    }
}

#[test]
fn nystrom_node_doubling() {
    let a = nystrom_solve(2.0, 1e-4, 200).unwrap();
    let b = nystrom_solve(2.0, 1e-4, 400).unwrap();
    assert!((a.psi_at_x0 / b.psi_at_x0 - 1.0).abs() < 1e-6);
}

#[test]
fn dual_bound_has_interior_minimum() {
    let ny = nystrom_solve(2.0, 1e-6, 400).unwrap();
    let p_star = ny.p_value();
    let ps: Vec<f64> = (1..=15).map(|k| 1.0 + (p_star - 1.0) * 0.25 * k as f64 / 4.0 * 2.0).collect();
    let pts = dual_bound_scan(2.0, ny.eps(), &ps, 400).unwrap();
    let (imin, _) = pts.iter().enumerate().min_by(|a, b| a.1.bound.total_cmp(&b.1.bound)).unwrap();
    assert!(imin > 0 && imin + 1 < pts.len(), "minimum at the scan edge: {imin}");
}

#[test]
fn left_gap_is_monotone() {
    let ks: Vec<f64> = (1..20).map(|k| 10f64.powi(k / 4) * (1 + k % 4) as f64).collect();
    let mut ks = ks;
    ks.sort_by(f64::total_cmp);
    let rows = left_unbounded_demo(0.01, &ks, 0.0).unwrap();
    assert!(rows.windows(2).all(|w| w[1].gap > w[0].gap || w[1].k == w[0].k));
    assert!(rows.iter().all(|r| r.l2_discrepancy <= 0.01));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grid_is_a_restriction(x0 in 1.0f64..4.0, ld in -4.0f64..-1.0, neg in any::<bool>()) {
        let f0 = F0::exponential();
        let d = 10f64.powf(ld) * (-x0).exp() * if neg { -0.5 } else { 1.0 };
        let g = grid_local_solve(&f0, x0, d, &log_t_grid(400, 70.0)).unwrap();
        let c = solve_local(&f0, x0, d).unwrap();
        prop_assert!(g.residual_l2 >= c.residual_l2 * (1.0 - 1e-9), "{} < {}", g.residual_l2, c.residual_l2);
    }

    #[test]
    fn dual_bound_dominates(x0 in 1.0f64..5.0, lv in -4.0f64..-1.5, p in 1.05f64..20.0) {
        let ny = nystrom_solve(x0, 10f64.powf(2.0 * lv), 300).unwrap();
        let pts = dual_bound_scan(x0, ny.eps(), &[p], 300).unwrap();
        prop_assert!(pts[0].bound >= ny.delta_star() * (1.0 - 1e-9));
    }
}
