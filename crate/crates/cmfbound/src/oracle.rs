//! Brute-force validators: a Nyström solve of `ε²ψ + Kψ = 1/(x₀+·)`, a
//! dense-grid least-squares competitor for the local problem, the dual upper
//! bound `√(q·Q(ε'))` and the left-extrapolation counterexample family.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmf::CmfMeasure;
use crate::error::{domain, Error, Result};
use crate::local_caprini::{graded_unit_rule, F0};
use crate::operator_k::UnitGridFunction;
use crate::phi_solver::solve_psi;

/// Below this `ε²` the dense route is refused.
pub const MIN_EPS2: f64 = 1e-10;

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    s: f64,
    c: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    // exact product split with fma
    fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.add(a.mul_add(b, -p));
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NystromSolution {
    /// Nodes, weights and `ψ` at the nodes.
    pub grid: UnitGridFunction,
    pub eps2: f64,
    pub x0: f64,
    pub psi_at_x0: f64,
    pub norm_l2: f64,
    /// `‖ψ‖ = ε^{-2}‖Λψ − e^{-x₀·}‖_{L²(0,∞)}`.
    pub norm_hardy: f64,
    /// Max over nodes of `|ε²ψ + Kψ − 1/(x₀+·)|`.
    pub discrete_residual: f64,
}

impl NystromSolution {
    pub fn psi_values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn veps(&self) -> f64 {
        self.eps2.sqrt()
    }

    /// Extension `ψ(z) = ε^{-2}(1/(z+x₀) − (Kψ)(z))`, `z > −min node`.
    pub fn psi(&self, z: f64) -> f64 {
        let mut acc = Acc::default();
        acc.add(1.0 / (z + self.x0));
        for ((x, w), v) in self.grid.nodes().iter().zip(self.grid.weights()).zip(self.grid.values()) {
            acc.add_prod(-w * v, 1.0 / (z + x));
        }
        acc.value() / self.eps2
    }

    /// `ε = ‖ψ‖₂/‖ψ‖`.
    pub fn eps(&self) -> f64 {
        self.norm_l2 / self.norm_hardy
    }

    /// `Δ* = ψ(x₀)/‖ψ‖`.
    pub fn delta_star(&self) -> f64 {
        self.psi_at_x0 / self.norm_hardy
    }

    /// `p = ψ(x₀)/‖ψ‖₂²`, the multiplier at which the dual bound is tight.
    pub fn p_value(&self) -> f64 {
        self.psi_at_x0 / (self.norm_l2 * self.norm_l2)
    }

    /// `|‖ψ‖₂² + ε²‖ψ‖² − ψ(x₀)| / ψ(x₀)`.
    pub fn pythagoras_residual(&self) -> f64 {
        let lhs = self.norm_l2 * self.norm_l2 + self.eps2 * self.norm_hardy * self.norm_hardy;
        (lhs - self.psi_at_x0).abs() / self.psi_at_x0.abs()
    }
}

/// Dense Nyström solve on `n` Gauss-Legendre nodes of `[0,1]`. The system is
/// symmetrised by `W^{1/2}` and solved by Cholesky with one step of iterative
/// refinement.
pub fn nystrom_solve(x0: f64, eps2: f64, n: usize) -> Result<NystromSolution> {
    if !(x0 >= 1.0) || !x0.is_finite() {
        return Err(domain(format!("x0 = {x0}"), "x0 >= 1"));
    }
    if !(eps2 > 0.0) || !eps2.is_finite() {
        return Err(domain(format!("eps2 = {eps2}"), "eps2 > 0"));
    }
    if n < 50 {
        return Err(domain(format!("n = {n}"), "n >= 50"));
    }
    if eps2 < MIN_EPS2 {
        // largest eigenvalue of K on L²(0,1) is π
        return Err(Error::IllConditioned {
            eps2,
            cond: (std::f64::consts::PI + eps2) / eps2,
        });
    }
    let grid = UnitGridFunction::gauss_legendre(n, |_| 0.0)?;
    let x = grid.nodes();
    let w = grid.weights();
    let sw: Vec<f64> = w.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let k = sw[i] * sw[j] / (x[i] + x[j]);
        if i == j {
            k + eps2
        } else {
            k
        }
    });
    let g: Vec<f64> = x.iter().map(|x| 1.0 / (x + x0)).collect();
    let rhs = DVector::from_fn(n, |i, _| sw[i] * g[i]);
    let chol = a.clone().cholesky().ok_or(Error::Singular)?;
    let mut y = chol.solve(&rhs);
    // refinement with a compensated residual
    let res = DVector::from_fn(n, |i, _| {
        let mut acc = Acc::default();
        acc.add(rhs[i]);
        for j in 0..n {
            acc.add_prod(-a[(i, j)], y[j]);
        }
        acc.value()
    });
    y += chol.solve(&res);
    let psi: Vec<f64> = (0..n).map(|i| y[i] / sw[i]).collect();

    // discrete residual and the pieces of the Hardy norm
    let mut kpsi = vec![0.0; n];
    let mut discrete_residual: f64 = 0.0;
    for i in 0..n {
        let mut acc = Acc::default();
        for j in 0..n {
            acc.add_prod(w[j] * psi[j], 1.0 / (x[i] + x[j]));
        }
        kpsi[i] = acc.value();
        discrete_residual = discrete_residual.max((eps2 * psi[i] + kpsi[i] - g[i]).abs());
    }
    let mut s = Acc::default();
    let mut l2 = Acc::default();
    for i in 0..n {
        s.add_prod(w[i] * psi[i], kpsi[i] - 2.0 * g[i]);
        l2.add_prod(w[i] * psi[i], psi[i]);
    }
    s.add(0.5 / x0);
    let hardy_sq = s.value().max(0.0) / (eps2 * eps2);

    let grid = grid.with_values(psi)?;
    let mut sol = NystromSolution {
        grid,
        eps2,
        x0,
        psi_at_x0: 0.0,
        norm_l2: l2.value().max(0.0).sqrt(),
        norm_hardy: hardy_sq.sqrt(),
        discrete_residual,
    };
    sol.psi_at_x0 = sol.psi(x0);
    Ok(sol)
}

/// Grid competitor for the local problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridLocalSolution {
    pub x0: f64,
    pub delta: f64,
    pub measure: CmfMeasure,
    pub residual_l2: f64,
    /// `f(x₀) − f₀(x₀) − δ` after the constraint correction.
    pub constraint_error: f64,
    pub grid_size: usize,
}

/// `n` points: `0` and `expm1` of a uniform grid in `ln(1+t)` up to `t_max`.
pub fn log_t_grid(n: usize, t_max: f64) -> Vec<f64> {
    let n = n.max(2);
    let top = t_max.ln_1p();
    (0..n).map(|j| (top * j as f64 / (n - 1) as f64).exp_m1()).collect()
}

// min ‖A_P z − b‖ subject to e_P·z = r, through a null-space basis of e_P.
fn eq_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, e: &DVector<f64>, r: f64, p: &[usize]) -> DVector<f64> {
    let ap = a.select_columns(p);
    let ep = DVector::from_fn(p.len(), |k, _| e[p[k]]);
    let z0 = &ep * (r / ep.norm_squared());
    if p.len() == 1 {
        return z0;
    }
    // Householder reflector H with H e_P ∥ first unit vector; columns 2.. span e_P⊥
    let mut v = ep.clone();
    v[0] += ep.norm();
    let vv = v.norm_squared();
    let h = DMatrix::<f64>::identity(p.len(), p.len()) - &v * v.transpose() * (2.0 / vv);
    let basis = h.columns(1, p.len() - 1).into_owned();
    let m = &ap * &basis;
    let rhs = b - &ap * &z0;
    let svd = m.svd(true, true);
    let cut = 1e-15 * svd.singular_values.max();
    let y = svd.solve(&rhs, cut).unwrap_or_else(|_| DVector::zeros(p.len() - 1));
    z0 + basis * y
}

/// Nonnegative least squares with one equality,
/// `min ‖Ac − b‖` over `c ≥ 0`, `e·c = r` (`e > 0`, `r > 0`), by a
/// Lawson-Hanson active set started from the best single column.
pub fn nnls_eq(a: &DMatrix<f64>, b: &DVector<f64>, e: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let start = (0..n)
        .min_by(|&i, &j| {
            let ri = (a.column(i) * (r / e[i]) - b).norm();
            let rj = (a.column(j) * (r / e[j]) - b).norm();
            ri.total_cmp(&rj)
        })
        .unwrap_or(0);
    x[start] = r / e[start];
    passive[start] = true;
    let col_norm: Vec<f64> = (0..n).map(|j| a.column(j).norm().max(f64::MIN_POSITIVE)).collect();
    for _ in 0..3 * n {
        let resid = a * &x - b;
        let grad = a.transpose() * &resid;
        let p: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
        let m = p.iter().map(|&k| grad[k] * e[k]).sum::<f64>() / p.iter().map(|&k| e[k] * e[k]).sum::<f64>();
        let tol = 1e-13 * resid.norm();
        let mut best = None;
        for j in 0..n {
            // dual slack per unit column norm
            let s = (grad[j] - m * e[j]) / col_norm[j];
            if !passive[j] && s < -tol && best.map_or(true, |(_, g)| s < g) {
                best = Some((j, s));
            }
        }
        let Some((j, _)) = best else { break };
        passive[j] = true;
        for _ in 0..n {
            let p: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let z = eq_lstsq(a, b, e, r, &p);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in p.iter().enumerate() {
                    x[i] = z[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &i) in p.iter().enumerate() {
                if z[k] <= 0.0 && x[i] > z[k] {
                    alpha = alpha.min(x[i] / (x[i] - z[k]));
                }
            }
            for (k, &i) in p.iter().enumerate() {
                x[i] += alpha * (z[k] - x[i]);
                if x[i] <= 0.0 || (z[k] <= 0.0 && x[i] <= 1e-15 * r / e[i]) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&q| q) {
                break;
            }
        }
    }
    x
}

/// Equality-constrained NNLS over weights at the given support points, the
/// constraint being `f(x₀) = f₀(x₀) + δ`.
pub fn grid_local_solve(f0: &F0, x0: f64, delta: f64, t_grid: &[f64]) -> Result<GridLocalSolution> {
    if !(x0 > 0.0) || !x0.is_finite() || !delta.is_finite() {
        return Err(domain(format!("x0 = {x0}, delta = {delta}"), "x0 > 0, finite delta"));
    }
    if t_grid.is_empty() || t_grid.len() > 2000 || t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(domain(format!("t_grid of size {}", t_grid.len()), "1..=2000 finite points >= 0"));
    }
    let v0 = f0.value(x0);
    let r = v0 + delta;
    if !(r > 0.0) {
        return Err(Error::Infeasible { delta, min: -v0 });
    }
    let (xq, wq) = graded_unit_rule();
    let m = xq.len();
    let n = t_grid.len();
    let a = DMatrix::from_fn(m, n, |i, j| wq[i].sqrt() * (-xq[i] * t_grid[j]).exp());
    let b = DVector::from_fn(m, |i, _| wq[i].sqrt() * f0.value(xq[i]));
    let e = DVector::from_fn(n, |j, _| (-x0 * t_grid[j]).exp());
    let c = nnls_eq(&a, &b, &e, r);
    let measure = CmfMeasure::new((0..n).filter(|&j| c[j] > 0.0).map(|j| (t_grid[j], c[j])))?;
    let residual_l2 = xq
        .iter()
        .zip(&wq)
        .map(|(x, w)| {
            let d = measure.eval(*x) - f0.value(*x);
            w * d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok(GridLocalSolution {
        x0,
        delta,
        constraint_error: measure.eval(x0) - r,
        measure,
        residual_l2,
        grid_size: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub p: f64,
    pub q: f64,
    /// `ε√(p/q)`, the regularisation at which `Q` is evaluated.
    pub veps: f64,
    pub bound: f64,
}

/// `√(q·Q(ε√(p/q)))` with `Q(ε') = ε'²ψ_{ε'}(x₀)`, for each `p` (must be > 1).
/// `Q` comes from the Nyström solve on `n` nodes, or from the spectral solver
/// where `ε'²` is below the dense-solve range.
pub fn dual_bound_scan(x0: f64, eps: f64, p_scan: &[f64], n: usize) -> Result<Vec<DualPoint>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps = {eps}"), "eps > 0"));
    }
    if let Some(p) = p_scan.iter().find(|p| !(**p > 1.0) || !p.is_finite()) {
        return Err(domain(format!("p = {p}"), "p > 1"));
    }
    p_scan
        .par_iter()
        .map(|&p| {
            let q = p / (p - 1.0);
            let veps = eps * (p - 1.0).sqrt();
            let eps2 = veps * veps;
            let psi0 = if eps2 >= MIN_EPS2 {
                nystrom_solve(x0, eps2, n)?.psi_at_x0
            } else {
                solve_psi(x0, veps)?.psi_at_x0
            };
            Ok(DualPoint {
                p,
                q,
                veps,
                bound: (q * eps2 * psi0).sqrt(),
            })
        })
        .collect()
}

/// Minimum of the dual bound over the scanned `p`, Nyström on 400 nodes.
pub fn dual_upper_bound(x0: f64, eps: f64, p_scan: &[f64]) -> Result<f64> {
    let pts = dual_bound_scan(x0, eps, p_scan, 400)?;
    Ok(pts.iter().map(|d| d.bound).fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeftRow {
    pub k: f64,
    /// `‖f_K − f‖₂ = ε√(1 − e^{-2K})` on `(0,1)`.
    pub l2_discrepancy: f64,
    /// The same norm by quadrature.
    pub l2_quadrature: f64,
    /// `f_K(c) − f(c) = ε√(2K)e^{-Kc}`.
    pub gap: f64,
}

/// The family `f_K = f + ε√(2K)e^{-Kx}` stays within `ε` of `f` in `L²(0,1)`
/// while its value at `c ≤ 0` grows without bound.
pub fn left_unbounded_demo(eps: f64, k_list: &[f64], c: f64) -> Result<Vec<LeftRow>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps = {eps}"), "eps > 0"));
    }
    if !(c <= 0.0) || !c.is_finite() {
        return Err(domain(format!("c = {c}"), "c <= 0"));
    }
    if let Some(k) = k_list.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
        return Err(domain(format!("K = {k}"), "K > 0"));
    }
    let (xq, wq) = graded_unit_rule();
    Ok(k_list
        .iter()
        .map(|&k| {
            let amp = eps * (2.0 * k).sqrt();
            let quad: f64 = xq
                .iter()
                .zip(&wq)
                .map(|(x, w)| {
                    let d = amp * (-k * x).exp();
                    w * d * d
                })
                .sum();
            LeftRow {
                k,
                l2_discrepancy: eps * (-(-2.0 * k).exp_m1()).sqrt(),
                l2_quadrature: quad.sqrt(),
                gap: amp * (-k * c).exp(),
            }
        })
        .collect())
}
