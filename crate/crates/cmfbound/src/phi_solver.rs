//! Spectral solution of the regularised integral equation
//! `ε² ψ + K ψ = 1/(x₀ + ·)` on `[0,1]` and the worst-case discrepancy
//! `Δ*(ϵ)` built from it.
//!
//! In the eigenbasis of `K` the solution is diagonal:
//!
//! ```text
//! ψ(z)    = ∫ u(x₀;μ) u(z;μ) μ tanh(πμ) / D(μ) dμ
//! ‖ψ‖₂²   = ∫ u(x₀;μ)²       μ tanh(πμ) / D(μ)² dμ
//! ‖ψ‖²    = (1/π) ∫ u(x₀;μ)² μ sinh(πμ) / D(μ)² dμ
//! D(μ)    = 2 ε̂² cosh(πμ) + 1,   ε̂ = ε/√(2π)
//! ```
//!
//! All three integrals share one μ grid and are summed in log space, since
//! `u(x₀;μ)` grows like `e^{μ α(x₀)}` and `cosh(πμ)` overflows long before
//! the integrands become negligible.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmf::CmfMeasure;
use crate::error::{domain, Error, Result};
use crate::quad;
use crate::special_fn::{self, alpha, eigfun_u, ln_u_above_one, r_factor, u_real};

pub const DEFAULT_MU_STEP: f64 = 0.02;

/// Uniform composite-Simpson grid in μ, optionally carrying `ln u(x₀;μ)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub mu_nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub mu_max: f64,
    pub x0: Option<f64>,
    pub ln_u_x0: Option<Vec<f64>>,
}

impl SpectralGrid {
    /// Nodes `k·h` on `[0, mu_max]`; `mu_max` is rounded up to an even
    /// number of steps of size `step`.
    pub fn simpson(mu_max: f64, step: f64) -> Result<Self> {
        if !(mu_max > 0.0) || !(step > 0.0) || !mu_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spectral grid needs mu_max > 0 and step > 0 (got {mu_max}, {step})"
            )));
        }
        let mut n = (mu_max / step).ceil() as usize;
        n += n % 2;
        let n = n.max(2);
        Ok(Self {
            mu_nodes: (0..=n).map(|k| k as f64 * step).collect(),
            weights: quad::simpson_weights(n, step),
            mu_max: n as f64 * step,
            x0: None,
            ln_u_x0: None,
        })
    }

    /// Attach `ln u(x₀;μ)` at every node.
    pub fn with_x0(mut self, x0: f64) -> Result<Self> {
        check_x0(x0)?;
        self.ln_u_x0 = Some(ln_u_table(x0, &self.mu_nodes));
        self.x0 = Some(x0);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.mu_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_nodes.is_empty()
    }
}

fn check_x0(x0: f64) -> Result<()> {
    if x0 >= 1.0 && x0.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("x0 = {x0}"), "x0 >= 1"))
    }
}

fn ln_u_table(x0: f64, mus: &[f64]) -> Vec<f64> {
    if x0 == 1.0 {
        return vec![0.0; mus.len()];
    }
    mus.par_iter().map(|&mu| ln_u_above_one(x0, mu)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiOptions {
    /// Simpson step in μ.
    pub mu_step: f64,
    /// Target relative tail mass used by the truncation rule.
    pub tail_tol: f64,
    /// Solutions whose estimated tail exceeds this relative mass are rejected.
    pub tail_check: f64,
    /// Fixed truncation instead of the ε-dependent rule.
    pub mu_max: Option<f64>,
    /// Hard ceiling on the truncation.
    pub mu_cap: f64,
}

impl Default for PhiOptions {
    fn default() -> Self {
        Self {
            mu_step: DEFAULT_MU_STEP,
            tail_tol: 1e-11,
            tail_check: 1e-8,
            mu_max: None,
            mu_cap: 4000.0,
        }
    }
}

/// Truncation `μ_max = (2/π)|ln ε̂| + ln(1/tol)/(π(1-β₀)) + 6` with
/// `β₀ = 2α(x₀)/π`. Past the hump at `(2/π)|ln ε̂|` the integrands decay like
/// `e^{-π(1-β₀)μ}`, so the middle term buys the requested tail mass; it is
/// never smaller than the bare `(2/π)|ln ε̂| + 6`.
pub fn mu_max_rule(x0: f64, veps: f64, tail_tol: f64) -> f64 {
    let eh = veps / (2.0 * PI).sqrt();
    let beta0 = if x0 > 1.0 { 2.0 * (1.0 / x0).acos() / PI } else { 0.0 };
    2.0 / PI * eh.ln().abs() + (1.0 / tail_tol).ln() / (PI * (1.0 - beta0)) + 6.0
}

/// Solution of the φ-problem for one `(x₀, ε)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiSolution {
    pub x0: f64,
    /// Regularisation parameter ε of the integral equation.
    pub veps: f64,
    pub veps_hat: f64,
    pub mu_max: f64,
    pub psi_at_x0: f64,
    /// `‖ψ‖₂` on `(0,1)`.
    pub norm_l2: f64,
    /// Hardy-space norm `‖ψ‖`.
    pub norm_hardy: f64,
    /// Data misfit ϵ matched by this ε.
    pub eps: f64,
    pub delta_star: f64,
    /// Relative tail mass estimate past `mu_max`.
    pub tail_estimate: f64,
    #[serde(skip)]
    grid: SpectralGrid,
    #[serde(skip)]
    ln_weight: Vec<f64>,
}

impl PhiSolution {
    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// `|‖ψ‖₂² + ε²‖ψ‖² − ψ(x₀)| / ψ(x₀)`.
    pub fn pythagoras_residual(&self) -> f64 {
        let lhs = self.norm_l2 * self.norm_l2 + self.veps * self.veps * self.norm_hardy * self.norm_hardy;
        (lhs - self.psi_at_x0).abs() / self.psi_at_x0
    }

    /// `p = ψ(x₀)/‖ψ‖₂²`, the optimal exponent of the quadratic relaxation; > 1.
    pub fn p_value(&self) -> f64 {
        self.psi_at_x0 / (self.norm_l2 * self.norm_l2)
    }

    /// `ψ(z)` for real `z > 0` (including `(0,1]`) or complex `z ∈ Ω`.
    pub fn psi_value(&self, z: C64) -> Result<C64> {
        let ln_u0 = self.grid.ln_u_x0.as_ref().expect("solution grid carries ln u(x0)");
        if z.im == 0.0 && z.re >= 1.0 && z.re.is_finite() {
            let ln_uz: Vec<f64> = if z.re == self.x0 {
                ln_u0.clone()
            } else {
                self.grid.mu_nodes.iter().map(|&mu| ln_u_above_one(z.re, mu)).collect()
            };
            return Ok(C64::new(self.sum_ln(&ln_uz), 0.0));
        }
        if z.im == 0.0 && z.re > 0.0 {
            let x = z.re;
            let s = self
                .grid
                .mu_nodes
                .iter()
                .zip(ln_u0)
                .zip(&self.ln_weight)
                .skip(1)
                .map(|((&mu, lu0), lw)| (lu0 + lw).exp() * u_real(x, mu))
                .sum();
            return Ok(C64::new(s, 0.0));
        }
        if !special_fn::in_omega(z) {
            return Err(domain(format!("z = {z}"), "Re z > 0, z not in [0,1]"));
        }
        let mut s = C64::new(0.0, 0.0);
        for ((&mu, lu0), lw) in self.grid.mu_nodes.iter().zip(ln_u0).zip(&self.ln_weight).skip(1) {
            s += (lu0 + lw).exp() * eigfun_u(z, mu)?.value;
        }
        Ok(s)
    }

    fn sum_ln(&self, ln_uz: &[f64]) -> f64 {
        let ln_u0 = self.grid.ln_u_x0.as_ref().unwrap();
        ln_u0
            .iter()
            .zip(ln_uz)
            .zip(&self.ln_weight)
            .skip(1)
            .map(|((a, b), lw)| (a + b + lw).exp())
            .sum()
    }
}

/// Solver for a fixed `x₀` that reuses `ln u(x₀;μ)` across many ε.
#[derive(Debug, Clone)]
pub struct PhiSolver {
    x0: f64,
    opts: PhiOptions,
    beta0: f64,
    cache: SpectralGrid,
}

impl PhiSolver {
    pub fn new(x0: f64, opts: PhiOptions) -> Result<Self> {
        check_x0(x0)?;
        if !(opts.mu_step > 0.0) || !(opts.tail_tol > 0.0) {
            return Err(Error::InvalidArgument("mu_step and tail_tol must be positive".into()));
        }
        // cover the smallest ε the ε ↔ ϵ inversion ever visits
        let extent = opts
            .mu_max
            .unwrap_or_else(|| mu_max_rule(x0, 1e-16, opts.tail_tol))
            .min(opts.mu_cap);
        let cache = SpectralGrid::simpson(extent, opts.mu_step)?.with_x0(x0)?;
        let beta0 = if x0 > 1.0 { 2.0 * (1.0 / x0).acos() / PI } else { 0.0 };
        Ok(Self {
            x0,
            opts,
            beta0,
            cache,
        })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn options(&self) -> &PhiOptions {
        &self.opts
    }

    pub fn solve(&self, veps: f64) -> Result<PhiSolution> {
        if !(veps > 0.0 && veps <= 1.0) {
            return Err(domain(format!("veps = {veps}"), "0 < veps < 1"));
        }
        let h = self.opts.mu_step;
        let target = self
            .opts
            .mu_max
            .unwrap_or_else(|| mu_max_rule(self.x0, veps, self.opts.tail_tol))
            .min(self.opts.mu_cap);
        let mut grid = SpectralGrid::simpson(target, h)?;
        let n = grid.len();
        let cached = self.cache.ln_u_x0.as_ref().unwrap();
        let ln_u: Vec<f64> = if n <= cached.len() {
            cached[..n].to_vec()
        } else {
            let mut v = cached.clone();
            v.extend(ln_u_table(self.x0, &grid.mu_nodes[cached.len()..]));
            v
        };
        grid.x0 = Some(self.x0);
        grid.ln_u_x0 = Some(ln_u);

        let veps_hat = veps / (2.0 * PI).sqrt();
        let ln_eh2 = 2.0 * veps_hat.ln();
        let mut ln_weight = vec![f64::NEG_INFINITY; n];
        let mut ln_d = vec![0.0; n];
        let mut ln_sinh = vec![0.0; n];
        for k in 1..n {
            let mu = grid.mu_nodes[k];
            let pm = PI * mu;
            let ln_2cosh = pm + (-2.0 * pm).exp().ln_1p();
            let ld = ln_add_exp(ln_eh2 + ln_2cosh, 0.0);
            let ln_tanh = (-2.0 * pm).exp_m1().abs().ln() - (-2.0 * pm).exp().ln_1p();
            ln_weight[k] = grid.weights[k].ln() + mu.ln() + ln_tanh - ld;
            ln_d[k] = ld;
            ln_sinh[k] = pm + (-(-2.0 * pm).exp_m1()).ln() - 2f64.ln();
        }

        let mut solution = PhiSolution {
            x0: self.x0,
            veps,
            veps_hat,
            mu_max: grid.mu_max,
            psi_at_x0: 0.0,
            norm_l2: 0.0,
            norm_hardy: 0.0,
            eps: 0.0,
            delta_star: 0.0,
            tail_estimate: 0.0,
            grid,
            ln_weight,
        };
        let ln_u = solution.grid.ln_u_x0.as_ref().unwrap();
        let psi = solution.sum_ln(ln_u);
        let mut l2 = 0.0;
        let mut hardy = 0.0;
        for k in 1..n {
            let mu = solution.grid.mu_nodes[k];
            let lw = solution.ln_weight[k];
            l2 += (2.0 * ln_u[k] + lw - ln_d[k]).exp();
            hardy += (2.0 * ln_u[k] + solution.grid.weights[k].ln() + mu.ln() + ln_sinh[k] - 2.0 * ln_d[k]).exp();
        }
        hardy /= PI;

        let last = (2.0 * ln_u[n - 1] + solution.ln_weight[n - 1]).exp() / solution.grid.weights[n - 1];
        let tail = last / (PI * (1.0 - self.beta0)).max(1e-300) / psi;
        if !(tail <= self.opts.tail_check) {
            return Err(Error::TailRule {
                mu_max: solution.mu_max,
                tail,
            });
        }
        solution.psi_at_x0 = psi;
        solution.norm_l2 = l2.sqrt();
        solution.norm_hardy = hardy.sqrt();
        solution.eps = solution.norm_l2 / solution.norm_hardy;
        solution.delta_star = psi / solution.norm_hardy;
        solution.tail_estimate = tail;
        Ok(solution)
    }

    /// Δ*(ϵ) by bisection on `log₁₀ ε ∈ [-16, 0]`, 60 halvings.
    pub fn delta_star(&self, eps: f64) -> Result<DeltaStarPoint> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(domain(format!("eps = {eps}"), "0 < eps < 1/2"));
        }
        let (mut lo, mut hi) = (-16.0f64, 0.0f64);
        let e_lo = self.solve(10f64.powf(lo))?.eps;
        let e_hi = self.solve(10f64.powf(hi))?.eps;
        if !(e_lo < eps && eps < e_hi) {
            return Err(Error::NoBracket {
                lo: 10f64.powf(lo),
                hi: 10f64.powf(hi),
                detail: format!("eps ranges over [{e_lo:.3e}, {e_hi:.3e}], target {eps:.3e}"),
            });
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.solve(10f64.powf(mid))?.eps > eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let solution = self.solve(10f64.powf(0.5 * (lo + hi)))?;
        Ok(DeltaStarPoint {
            eps,
            veps: solution.veps,
            delta_star: solution.delta_star,
            solution,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStarPoint {
    pub eps: f64,
    pub veps: f64,
    pub delta_star: f64,
    #[serde(skip)]
    pub solution: PhiSolution,
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn solve_psi(x0: f64, veps: f64) -> Result<PhiSolution> {
    if !(veps > 0.0 && veps <= 1.0) {
        return Err(domain(format!("veps = {veps}"), "0 < veps < 1"));
    }
    // a one-off solve only needs the cache up to its own truncation
    let opts = PhiOptions::default();
    let opts = PhiOptions {
        mu_max: Some(mu_max_rule(x0, veps, opts.tail_tol)),
        ..opts
    };
    PhiSolver::new(x0, opts)?.solve(veps)
}

pub fn psi_value(sol: &PhiSolution, z: C64) -> Result<C64> {
    sol.psi_value(z)
}

/// ϵ = ‖ψ‖₂/‖ψ‖.
pub fn eps_of_veps(sol: &PhiSolution) -> f64 {
    sol.eps
}

pub fn delta_star_at(x0: f64, eps: f64) -> Result<DeltaStarPoint> {
    PhiSolver::new(x0, PhiOptions::default())?.delta_star(eps)
}

/// Leading-order Δ*(ϵ): `C*(x₀) ϵ^{γ*(x₀)}` for `x₀ > 1` and
/// `(√2/π) ϵ |ln ϵ|` at `x₀ = 1`.
pub fn delta_star_asymptotic(x0: f64, eps: f64) -> Result<f64> {
    check_x0(x0)?;
    if x0 == 1.0 {
        Ok(2f64.sqrt() / PI * eps * eps.ln().abs())
    } else {
        Ok(special_fn::c_star(x0)? * eps.powf(special_fn::gamma_star(x0)?))
    }
}

/// Leading-order `ψ(z)` as ε → 0: for `x₀ > 1`,
/// `R(x₀)R(z) ε̂^{-2β(z)} / (2π sin πβ(z))`; for `x₀ = 1`,
/// `R(z) √|ln ε̂| ε̂^{-2α(z)/π} / (π sin α(z))`.
pub fn psi_asymptotic(x0: f64, veps: f64, z: C64) -> Result<C64> {
    check_x0(x0)?;
    let eh = veps / (2.0 * PI).sqrt();
    let ln_eh = eh.ln();
    let rz = r_factor(z)?;
    let az = alpha(z)?;
    if x0 == 1.0 {
        return Ok(rz * ln_eh.abs().sqrt() * (-2.0 * az / PI * ln_eh).exp() / (PI * az.sin()));
    }
    let r0 = r_factor(C64::new(x0, 0.0))?;
    let b = special_fn::beta(x0, z)?;
    Ok(r0 * rz * (-2.0 * b * ln_eh).exp() / (2.0 * PI * (PI * b).sin()))
}

/// Limit of ϵ/ε as ε → 0 for `x₀ > 1`: `√(arcsin(1/x₀)/arccos(1/x₀))`.
pub fn eps_ratio_limit(x0: f64) -> Result<f64> {
    if !(x0 > 1.0) {
        return Err(domain(format!("x0 = {x0}"), "x0 > 1"));
    }
    Ok(((1.0 / x0).asin() / (1.0 / x0).acos()).sqrt())
}

/// Leading-order `‖ψ‖₂²` at `x₀ = 1`: `(2/π²) ln² ε`.
pub fn norm_l2_sq_asymptotic_unit(veps: f64) -> f64 {
    2.0 / (PI * PI) * veps.ln().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawPoint {
    pub eps: f64,
    pub veps: f64,
    pub delta_star: f64,
    pub asymptotic_value: f64,
    pub ratio: f64,
    pub local_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub x0: f64,
    pub slope: f64,
    pub intercept: f64,
    pub gamma_star: f64,
    pub points: Vec<PowerLawPoint>,
}

/// Least-squares slope of `ln Δ*` against `ln ϵ` over at least four decades,
/// with local slopes from neighbouring points.
pub fn powerlaw_fit(x0: f64, eps_values: &[f64]) -> Result<PowerLawFit> {
    powerlaw_fit_with(&PhiSolver::new(x0, PhiOptions::default())?, eps_values)
}

pub fn powerlaw_fit_with(solver: &PhiSolver, eps_values: &[f64]) -> Result<PowerLawFit> {
    let x0 = solver.x0();
    let mut eps: Vec<f64> = eps_values.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 2 || eps[eps.len() - 1] / eps[0] < 1e4 * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(
            "power-law fit needs eps values spanning at least four decades".into(),
        ));
    }
    let points: Vec<DeltaStarPoint> = eps
        .par_iter()
        .map(|&e| solver.delta_star(e))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.delta_star.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let m = lx.len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let (a, b) = if i == 0 {
            (0, 1)
        } else if i == m - 1 {
            (m - 2, m - 1)
        } else {
            (i - 1, i + 1)
        };
        let local_slope = (ly[b] - ly[a]) / (lx[b] - lx[a]);
        let asymptotic_value = delta_star_asymptotic(x0, eps[i])?;
        out.push(PowerLawPoint {
            eps: eps[i],
            veps: points[i].veps,
            delta_star: points[i].delta_star,
            asymptotic_value,
            ratio: points[i].delta_star / asymptotic_value,
            local_slope,
        });
    }
    Ok(PowerLawFit {
        x0,
        slope,
        intercept: my - slope * mx,
        gamma_star: special_fn::gamma_star(x0)?,
        points: out,
    })
}

/// The extremal test function `φ = ϵ ψ/‖ψ‖₂`.
#[derive(Debug, Clone)]
pub struct PhiExtremal {
    pub solution: PhiSolution,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalCheck {
    /// `‖φ‖₂ / ϵ` from direct quadrature of φ on `[0,1]`.
    pub l2_over_eps: f64,
    /// `‖φ‖` from the Laplace-density identity.
    pub hardy_norm: f64,
    /// `φ(x₀)`.
    pub value_at_x0: f64,
}

pub fn phi_extremal(sol: &PhiSolution) -> PhiExtremal {
    PhiExtremal {
        solution: sol.clone(),
        scale: sol.eps / sol.norm_l2,
    }
}

impl PhiExtremal {
    pub fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.solution.psi_value(z)? * self.scale)
    }

    /// Re-derive both norms of φ from samples of ψ on `[0,1]`, independently
    /// of the spectral norm integrals. The Hardy norm uses
    /// `ε⁴‖ψ‖² = (ψ, Kψ)₂ − 2∫ψ/(x+x₀) + 1/(2x₀)`.
    pub fn verify(&self) -> Result<ExtremalCheck> {
        let (x, w) = graded_rule();
        let psi: Vec<f64> = x
            .par_iter()
            .map(|&xi| self.solution.psi_value(C64::new(xi, 0.0)).map(|v| v.re))
            .collect::<Result<_>>()?;
        let sol = &self.solution;
        let l2: f64 = psi.iter().zip(&w).map(|(p, w)| w * p * p).sum::<f64>().sqrt();
        let mut pkp = 0.0;
        for i in 0..x.len() {
            let mut kp = 0.0;
            for j in 0..x.len() {
                kp += w[j] * psi[j] / (x[i] + x[j]);
            }
            pkp += w[i] * psi[i] * kp;
        }
        let cross: f64 = x.iter().zip(&w).zip(&psi).map(|((x, w), p)| w * p / (x + sol.x0)).sum();
        let h2 = (pkp - 2.0 * cross + 0.5 / sol.x0) / sol.veps.powi(4);
        Ok(ExtremalCheck {
            l2_over_eps: self.scale * l2 / sol.eps,
            hardy_norm: self.scale * h2.max(0.0).sqrt(),
            value_at_x0: self.eval(C64::new(sol.x0, 0.0))?.re,
        })
    }
}

// Gauss-Legendre on geometrically graded panels of [0,1]; ψ carries an
// x ln x term at the origin.
fn graded_rule() -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut w = Vec::new();
    let mut edges = vec![0.0];
    for k in (0..=10).rev() {
        edges.push(10f64.powi(-k));
    }
    for p in edges.windows(2) {
        let (xn, wn) = quad::gauss_legendre(20, p[0], p[1]);
        x.extend(xn);
        w.extend(wn);
    }
    (x, w)
}

/// `a_p = cos(π/(2p))`.
pub fn a_p(p: f64) -> f64 {
    (PI / (2.0 * p)).cos()
}

/// `C_p = √(p/(π a_p) + π p a_p/6)`, the forward constant of the norm bridge.
pub fn cp_constant(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(domain(format!("p = {p}"), "p > 1"));
    }
    let a = a_p(p);
    Ok((p / (PI * a) + PI * p * a / 6.0).sqrt())
}

/// Constant of the reverse bound `‖f‖₂ ≤ 2√(2π/p) ‖f‖_{𝔥p}`.
pub fn reverse_constant(p: f64) -> f64 {
    2.0 * (2.0 * PI / p).sqrt()
}

/// `‖f‖_{𝔥p}² = (1/π) ∫₀^∞ |F_p[f](iy)|² dy` with
/// `F_p[f](z) = f(z^{1/p}) / (z^{(p-1)/(2p)} (z^{1/p} + 1))`. With
/// `v = y^{1/p}` this is `(p/π) ∫₀^∞ |f(v e^{iθ})|² / |v e^{iθ} + 1|² dv`,
/// `θ = π/(2p)`.
pub fn hp_norm(f: &CmfMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(domain(format!("p = {p}"), "p >= 1"));
    }
    let dir = C64::from_polar(1.0, PI / (2.0 * p));
    let scale = f.total_mass().max(f64::MIN_POSITIVE);
    let (v, _) = quad::adaptive_half_line(
        |v| {
            let z = dir * v;
            f.eval_complex(z).norm_sqr() / (z + 1.0).norm_sqr()
        },
        1e-15 * scale * scale,
        1e-11,
    )?;
    Ok((p / PI * v).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_rounds_to_even_intervals() {
        let g = SpectralGrid::simpson(1.01, 0.02).unwrap();
        assert_eq!((g.len() - 1) % 2, 0);
        assert!(g.mu_max >= 1.01);
        let s: f64 = g.weights.iter().sum();
        assert_relative_eq!(s, g.mu_max, max_relative = 1e-14);
    }

    #[test]
    fn truncation_rule_dominates_the_bare_rule() {
        for x0 in [1.0, 2.0, 5.0] {
            for v in [1e-2, 1e-8] {
                let eh: f64 = v / (2.0 * PI).sqrt();
                assert!(mu_max_rule(x0, v, 1e-11) >= 2.0 / PI * eh.ln().abs() + 6.0);
            }
        }
    }

    #[test]
    fn pythagoras_and_p_value() {
        for x0 in [1.0, 1.5, 2.0, 5.0] {
            for v in [1e-2, 1e-4, 1e-6] {
                let s = solve_psi(x0, v).unwrap();
                assert!(s.pythagoras_residual() < 1e-12, "{x0} {v}: {}", s.pythagoras_residual());
                assert!(s.p_value() > 1.0);
                assert!(s.delta_star <= 1.0);
            }
        }
    }

    #[test]
    fn unit_point_l2_norm_follows_log_square() {
        let s = solve_psi(1.0, 1e-3).unwrap();
        let r = s.norm_l2.powi(2) / norm_l2_sq_asymptotic_unit(1e-3);
        assert!((0.8..=1.2).contains(&r), "{r}");
    }

    #[test]
    fn psi_value_reproduces_psi_at_x0() {
        let s = solve_psi(2.0, 1e-4).unwrap();
        assert_eq!(s.psi_value(C64::new(2.0, 0.0)).unwrap().re, s.psi_at_x0);
    }

    #[test]
    fn psi_value_is_continuous_across_one() {
        let s = solve_psi(2.0, 1e-2).unwrap();
        let a = s.psi_value(C64::new(1.0 - 1e-9, 0.0)).unwrap().re;
        let b = s.psi_value(C64::new(1.0 + 1e-9, 0.0)).unwrap().re;
        let c = s.psi_value(C64::new(1.0 + 1e-9, 1e-9)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-7);
        assert!((c - b).norm() < 1e-6 * b.abs());
    }

    #[test]
    fn eps_is_monotone_in_veps() {
        let solver = PhiSolver::new(2.0, PhiOptions::default()).unwrap();
        let e3 = solver.solve(1e-3).unwrap().eps;
        let e4 = solver.solve(1e-4).unwrap().eps;
        assert!(e3 > e4);
    }

    #[test]
    fn eps_ratio_tends_to_limit() {
        let s = solve_psi(2.0, 1e-8).unwrap();
        let lim = eps_ratio_limit(2.0).unwrap();
        assert_relative_eq!(lim, 0.5f64.sqrt(), max_relative = 1e-15);
        assert!((s.eps / s.veps / lim - 1.0).abs() < 0.02, "{}", s.eps / s.veps);
    }

    #[test]
    fn x0_one_eps_scale() {
        let s = solve_psi(1.0, 1e-8).unwrap();
        let r = s.eps / (1e-8 * 1e-8f64.ln().abs().sqrt());
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn delta_star_against_constant() {
        let p = delta_star_at(2.0, 1e-6).unwrap();
        let r = p.delta_star / delta_star_asymptotic(2.0, 1e-6).unwrap();
        assert!((r - 1.0).abs() < 0.05, "{r}");
        assert_relative_eq!(p.solution.eps, 1e-6, max_relative = 1e-9);
    }

    #[test]
    fn extremal_norms() {
        let s = solve_psi(2.0, 1e-2).unwrap();
        let phi = phi_extremal(&s);
        let c = phi.verify().unwrap();
        assert!((c.l2_over_eps - 1.0).abs() < 1e-6, "{c:?}");
        assert!((c.hardy_norm - 1.0).abs() < 1e-6, "{c:?}");
        assert!((c.value_at_x0 / s.delta_star - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hp_norm_constants() {
        assert_relative_eq!(cp_constant(2.0).unwrap(), 1.2810, epsilon = 1e-3);
        let f = CmfMeasure::exponential();
        for p in [1.0, 1.1, 2.0, 4.0] {
            let h = hp_norm(&f, p).unwrap();
            if p > 1.0 {
                assert!(h <= cp_constant(p).unwrap() * f.l2_norm());
            }
            assert!(f.l2_norm() <= reverse_constant(p) * h);
        }
        // p = 1 reduces to (1/π)∫₀^∞ |f(iy)|²/(1+y²) dy = 1/2 for f ≡ 1
        let one = CmfMeasure::new([(0.0, 1.0)]).unwrap();
        assert_relative_eq!(hp_norm(&one, 1.0).unwrap(), 0.5f64.sqrt(), max_relative = 1e-9);
    }
}
