//! The numbered acceptance checks, runnable one at a time or as a suite.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmf::CmfMeasure;
use crate::error::{Error, Result};
use crate::local_caprini::{e_minus_unit_exact, e_plus_limit, e_slopes, exp_optimum, solve_local, sweep_epsilon, CapriniState, F0, LocalOptions};
use crate::operator_k::eigen_residual;
use crate::oracle::{dual_bound_scan, grid_local_solve, left_unbounded_demo, log_t_grid, nystrom_solve};
use crate::phi_solver::{cp_constant, delta_star_asymptotic, delta_star_at, hp_norm, powerlaw_fit, reverse_constant, solve_psi};
use crate::quad::golden_min;
use crate::special_fn::u_real;

pub const DEFAULT_SEED: u64 = 20_061_108;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckSpec {
    pub id: u32,
    pub slug: &'static str,
    pub title: &'static str,
}

pub const CHECKS: [CheckSpec; 11] = [
    CheckSpec { id: 1, slug: "powerlaw", title: "power-law exponent at x0 = 2 and 5" },
    CheckSpec { id: 2, slug: "constant", title: "asymptotic constant at x0 = 2" },
    CheckSpec { id: 3, slug: "unit-branch", title: "x0 = 1 logarithmic branch" },
    CheckSpec { id: 4, slug: "pythagoras", title: "Pythagoras identity, spectral and Nystrom" },
    CheckSpec { id: 5, slug: "eigen", title: "eigen-relation and u(1) = 1" },
    CheckSpec { id: 6, slug: "cross-solver", title: "spectral vs Nystrom, dual bound" },
    CheckSpec { id: 7, slug: "exp-slopes", title: "exponential local slopes" },
    CheckSpec { id: 8, slug: "certificate", title: "certificate optimality" },
    CheckSpec { id: 9, slug: "oracle-gap", title: "grid oracle gap" },
    CheckSpec { id: 10, slug: "norm-bridge", title: "Hardy-type norm bridge" },
    CheckSpec { id: 11, slug: "left-demo", title: "left-extrapolation unboundedness" },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: u32,
    pub slug: String,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: f64,
}

/// Finds a check by slug or by number.
pub fn find_check(key: &str) -> Option<CheckSpec> {
    CHECKS
        .iter()
        .copied()
        .find(|c| c.slug == key || key.parse::<u32>().ok() == Some(c.id))
}

pub fn run_check(key: &str, seed: u64) -> Result<CheckResult> {
    let spec = find_check(key).ok_or_else(|| Error::InvalidArgument(format!("unknown check '{key}'")))?;
    let start = Instant::now();
    let outcome = match spec.id {
        1 => check_powerlaw(),
        2 => check_constant(),
        3 => check_unit_branch(),
        4 => check_pythagoras(),
        5 => check_eigen(seed),
        6 => check_cross_solver(),
        7 => check_exp_slopes(),
        8 => check_certificate(),
        9 => check_oracle_gap(),
        10 => check_norm_bridge(seed),
        _ => check_left_demo(),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CheckResult {
        id: spec.id,
        slug: spec.slug.to_string(),
        title: spec.title.to_string(),
        passed,
        detail,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|c| run_check(c.slug, seed).expect("slug from the table"))
        .collect()
}

type Outcome = Result<(bool, String)>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check_powerlaw() -> Outcome {
    let start = Instant::now();
    let eps: Vec<f64> = (0..=8).map(|k| 10f64.powf(-9.0 + 0.5 * f64::from(k))).collect();
    let mut ok = true;
    let mut detail = String::new();
    for x0 in [2.0, 5.0] {
        let fit = powerlaw_fit(x0, &eps)?;
        let target = if x0 == 2.0 { 1.0 / 3.0 } else { 2.0 / PI * (1.0 / x0).asin() };
        let pass = (fit.slope - target).abs() <= 0.01;
        ok &= pass;
        write!(detail, "x0={x0}: slope {:.6} vs {:.6}; ", fit.slope, target).unwrap();
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 60.0;
    write!(detail, "{secs:.2} s").unwrap();
    Ok((ok, detail))
}

fn check_constant() -> Outcome {
    let eps = 1e-8;
    let d = delta_star_at(2.0, eps)?;
    let ratio = d.delta_star / delta_star_asymptotic(2.0, eps)?;
    Ok(((0.95..=1.05).contains(&ratio), format!("Delta*/(C*(2) eps^(1/3)) = {ratio:.6} at eps = 1e-8")))
}

fn check_unit_branch() -> Outcome {
    let eps = 1e-8;
    let d = delta_star_at(1.0, eps)?;
    let ratio = d.delta_star / delta_star_asymptotic(1.0, eps)?;
    Ok((
        (0.90..=1.10).contains(&ratio),
        format!("Delta*/((sqrt2/pi) eps|ln eps|) = {ratio:.6} at eps = 1e-8"),
    ))
}

fn check_pythagoras() -> Outcome {
    let mut worst_sp: f64 = 0.0;
    let mut worst_ny: f64 = 0.0;
    for x0 in [1.0, 1.5, 2.0, 5.0] {
        for veps in [1e-2, 1e-4, 1e-6] {
            worst_sp = worst_sp.max(solve_psi(x0, veps)?.pythagoras_residual());
        }
        // Nyström validity range: ε² ≥ 1e-10
        for veps in [1e-2, 1e-3, 1e-4, 1e-5] {
            worst_ny = worst_ny.max(nystrom_solve(x0, veps * veps, 400)?.pythagoras_residual());
        }
    }
    Ok((
        worst_sp <= 1e-8 && worst_ny <= 1e-8,
        format!("max residual spectral {worst_sp:.2e}, Nystrom {worst_ny:.2e}"),
    ))
}

fn check_eigen(seed: u64) -> Outcome {
    let mut worst: f64 = 0.0;
    for mu in [0.5, 1.0, 2.0, 5.0] {
        worst = worst.max(eigen_residual(mu, 200)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let misses = (0..20)
        .filter(|_| u_real(1.0, rng.gen_range(0.0..40.0)) != 1.0)
        .count();
    Ok((
        worst <= 1e-6 && misses == 0,
        format!("max eigen residual {worst:.2e}; u(1) != 1 for {misses}/20 random mu"),
    ))
}

fn check_cross_solver() -> Outcome {
    let mut worst: f64 = 0.0;
    for x0 in [1.0f64, 2.0, 5.0] {
        for veps in [1e-4, 1e-3, 1e-2] {
            let sp = solve_psi(x0, veps)?;
            let ny = nystrom_solve(x0, veps * veps, 400)?;
            worst = worst.max(rel(ny.psi_at_x0, sp.psi_at_x0)).max(rel(ny.norm_l2, sp.norm_l2));
        }
    }
    let mut ok = worst <= 1e-4;
    let mut detail = format!("max relative gap {worst:.2e}; ");
    for x0 in [1.0f64, 2.0, 5.0] {
        let ny = nystrom_solve(x0, 1e-6, 400)?;
        let (eps, ds, p_star) = (ny.eps(), ny.delta_star(), ny.p_value());
        let ps: Vec<f64> = [0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|s| 1.0 + s * (p_star - 1.0)).collect();
        let pts = dual_bound_scan(x0, eps, &ps, 400)?;
        let below = pts.iter().filter(|d| d.bound < ds * (1.0 - 1e-10)).count();
        let tight = rel(pts[2].bound, ds);
        ok &= below == 0 && tight <= 1e-6;
        write!(detail, "x0={x0}: dual gap at p* {tight:.1e}, {below} below; ").unwrap();
    }
    Ok((ok, detail))
}

fn check_exp_slopes() -> Outcome {
    let one = e_slopes(1.0)?;
    let exact = e_minus_unit_exact();
    let c_plus = (one.e_plus - 2.677_882_63).abs() <= 1e-4;
    let c_minus = (one.e_minus - exact).abs() <= 1e-3;
    let far = e_slopes(50.0)?;
    let c_inf = rel(far.e_plus, e_plus_limit()) <= 0.01;
    let xs = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let mut hat = Vec::new();
    for x0 in xs {
        hat.push(e_slopes(x0)?.e_minus * x0.exp() / x0);
    }
    let monotone = hat.windows(2).all(|w| w[1] > w[0]);
    let c_hat = rel(hat[5], 5.8) <= 0.02;
    let (arg, neg) = golden_min(|x| -e_slopes(x).map(|s| s.e_minus).unwrap_or(0.0), 1.05, 1.6, 1e-4);
    let c_max = (arg - 1.269).abs() <= 0.01 && rel(-neg, 1.566) <= 0.01;
    Ok((
        c_plus && c_minus && c_inf && monotone && c_hat && c_max,
        format!(
            "E+(1) = {:.9}; E-(1) = {:.9} (exact form {exact:.9}, |E- - 1.5| = {:.2e}); E+(50) = {:.9}; \
             hatE-(50) = {:.4} monotone {monotone}; max E- = {:.4} at {arg:.4}",
            one.e_plus,
            one.e_minus,
            (one.e_minus - 1.5).abs(),
            far.e_plus,
            hat[5],
            -neg
        ),
    ))
}

fn check_certificate() -> Outcome {
    let f0 = F0::exponential();
    let mut states: Vec<CapriniState> = Vec::new();
    let mut worst_gap: f64 = 0.0;
    for x0 in [1.0f64, 2.0, 5.0] {
        for delta in [1e-1, 1e-3, 1e-6, -1e-3 * (-x0).exp()] {
            let s = solve_local(&f0, x0, delta)?;
            let c = exp_optimum(x0, delta)?;
            let atoms = s.support.atoms();
            let (a, b, tau) = match atoms {
                [w] => (0.0, w.a, w.t),
                [z, w] if z.t == 0.0 => (z.a, w.a, w.t),
                _ => return Ok((false, format!("unexpected support {atoms:?} at x0={x0}, delta={delta}"))),
            };
            let ga = if c.a > 0.0 { rel(a, c.a) } else { a.abs() };
            worst_gap = worst_gap.max(ga).max(rel(b, c.b)).max(rel(tau, c.tau));
            states.push(s);
        }
        let sw = sweep_epsilon(&f0, x0, 0.01)?;
        states.push(sw.upper_state);
        states.push(sw.lower_state);
    }
    let mut failed = 0;
    let mut worst_min: f64 = f64::INFINITY;
    let mut worst_atom: f64 = 0.0;
    for s in &states {
        let chk = s.check_certificate(10_000, LocalOptions::default().t_max_for(s.x0));
        failed += usize::from(!chk.passed);
        worst_min = worst_min.min(chk.grid_min / s.f0_norm_sq);
        worst_atom = worst_atom.max(chk.atom_max_abs);
    }
    Ok((
        failed == 0 && worst_gap <= 1e-6,
        format!(
            "{} states, {failed} failing; min C^/|f0|^2 {worst_min:.2e}; max |C^(t_j)| {worst_atom:.2e}; \
             closed-form gap {worst_gap:.2e}",
            states.len()
        ),
    ))
}

fn check_oracle_gap() -> Outcome {
    let f0 = F0::exponential();
    let grid = log_t_grid(2000, 70.0);
    let mut ok = true;
    let mut detail = String::new();
    for delta in [1e-3, -1e-3] {
        let g = grid_local_solve(&f0, 2.0, delta, &grid)?;
        let c = solve_local(&f0, 2.0, delta)?;
        let gap = (g.residual_l2 - c.residual_l2) / c.residual_l2;
        ok &= (-1e-9..=1e-3).contains(&gap);
        write!(detail, "delta={delta:e}: relative gap {gap:.2e}; ").unwrap();
    }
    Ok((ok, detail))
}

/// `n` random positive exponential sums with 1 to 4 atoms.
pub fn random_sums(n: usize, seed: u64) -> Vec<CmfMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=4);
            let atoms: Vec<(f64, f64)> = (0..k)
                .map(|_| {
                    let t = if rng.gen_bool(0.2) { 0.0 } else { 10f64.powf(rng.gen_range(-3.0..1.7)) };
                    (t, rng.gen_range(0.05..1.0))
                })
                .collect();
            CmfMeasure::new(atoms).expect("positive atoms")
        })
        .collect()
}

fn check_norm_bridge(seed: u64) -> Outcome {
    let sums = random_sums(50, seed);
    let mut violations = 0;
    let mut worst_upper: f64 = 0.0;
    let mut worst_lower: f64 = 0.0;
    for p in [1.1, 2.0, 4.0] {
        let cp = cp_constant(p)?;
        let rc = reverse_constant(p);
        for f in &sums {
            let h = hp_norm(f, p)?;
            let l2 = f.l2_norm();
            let up = h / (cp * l2);
            let lo = l2 / (rc * h);
            worst_upper = worst_upper.max(up);
            worst_lower = worst_lower.max(lo);
            violations += usize::from(up > 1.0) + usize::from(lo > 1.0);
        }
    }
    Ok((
        violations == 0,
        format!("{violations} violations; max |f|_hp/(C_p|f|_2) = {worst_upper:.4}, max |f|_2/(2sqrt(2pi/p)|f|_hp) = {worst_lower:.4}"),
    ))
}

fn check_left_demo() -> Outcome {
    let eps = 0.01;
    let mut ok = true;
    let mut detail = String::new();
    for m in [0.1, 1.0, 10.0] {
        let k = m * m / (2.0 * eps * eps);
        let rows = left_unbounded_demo(eps, &[k, 2.0 * k], 0.0)?;
        let pass = rows.iter().all(|r| r.l2_discrepancy <= eps && r.l2_quadrature <= eps * (1.0 + 1e-12))
            && rows[0].gap >= m * (1.0 - 1e-12)
            && rows[1].gap > m;
        ok &= pass;
        write!(detail, "M={m}: K={k:.0} gap {:.6}, at 2K {:.6}; ", rows[0].gap, rows[1].gap).unwrap();
    }
    Ok((ok, detail))
}
