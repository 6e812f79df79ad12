//! Discretised `K` (kernel `1/(x+y)` on `[0,1]`), the finite Laplace
//! transform `Λ`, the u-transform pair diagonalising `K`, and a residual check
//! for the differential operator `L` commuting with `K`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::phi_solver::SpectralGrid;
use crate::quad;
use crate::special_fn::{eigenvalue_nu, u_real};

/// Samples of a function on a quadrature rule for `[0,1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitGridFunction {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl UnitGridFunction {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() != values.len() || nodes.is_empty() {
            return Err(Error::InvalidArgument("nodes, weights and values must have equal nonzero length".into()));
        }
        if !nodes.windows(2).all(|p| p[0] < p[1]) || !(nodes[0] > 0.0) || !(nodes[nodes.len() - 1] < 1.0) {
            return Err(Error::InvalidArgument("nodes must be strictly increasing in (0,1)".into()));
        }
        if !weights.iter().all(|&w| w > 0.0) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { nodes, weights, values })
    }

    /// `n`-point Gauss-Legendre samples of `f`.
    pub fn gauss_legendre(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let (x, w) = quad::gauss_legendre(n, 0.0, 1.0);
        let v = x.iter().map(|&x| f(x)).collect();
        Self::new(x, w, v)
    }

    /// Samples of `f` on the rule `x = e^{-s}`, suited to `x^{-1/2}` endpoint
    /// behaviour such as that of the eigenfunctions.
    pub fn exp_rule(f: impl Fn(f64) -> f64 + Sync) -> Result<Self> {
        let (x, w) = quad::exp_substitution_rule();
        let v = x.par_iter().map(|&x| f(x)).collect();
        Self::new(x, w, v)
    }

    /// Same rule, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("value count does not match the grid".into()));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integral(&self) -> f64 {
        self.weights.iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// Discrete `(f, g)₂`; both must live on the same rule.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.nodes != other.nodes {
            return Err(Error::InvalidArgument("functions live on different grids".into()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.values)
            .zip(&other.values)
            .map(|((w, a), b)| w * a * b)
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `a f + b g` on the shared rule.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.nodes != other.nodes {
            return Err(Error::InvalidArgument("functions live on different grids".into()));
        }
        let v = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        self.with_values(v)
    }
}

/// `(Kf)(x) = ∫₀¹ f(y)/(x+y) dy` for real `x ≥ 0`.
pub fn apply_k(f: &UnitGridFunction, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(domain(format!("x = {x}"), "x >= 0"));
    }
    Ok(f.nodes
        .iter()
        .zip(&f.weights)
        .zip(&f.values)
        .map(|((y, w), v)| w * v / (x + y))
        .sum())
}

/// `(Kf)(z)` for complex `z` with `Re z ≥ 0`, `z ≠ 0`.
pub fn apply_k_complex(f: &UnitGridFunction, z: C64) -> Result<C64> {
    if !(z.re >= 0.0) || z == C64::new(0.0, 0.0) || !z.is_finite() {
        return Err(domain(format!("z = {z}"), "Re z >= 0, z != 0"));
    }
    Ok(f.nodes
        .iter()
        .zip(&f.weights)
        .zip(&f.values)
        .map(|((y, w), v)| w * v / (z + y))
        .sum())
}

/// `(Kf)` at every node of `f`'s own rule, as a new grid function.
pub fn apply_k_on_grid(f: &UnitGridFunction) -> UnitGridFunction {
    let v = f.nodes.iter().map(|&x| apply_k(f, x).unwrap()).collect();
    f.with_values(v).unwrap()
}

/// `(Λf)(t) = ∫₀¹ f(x) e^{-xt} dx`.
pub fn apply_lambda(f: &UnitGridFunction, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(domain(format!("t = {t}"), "t >= 0"));
    }
    Ok(f.nodes
        .iter()
        .zip(&f.weights)
        .zip(&f.values)
        .map(|((x, w), v)| w * v * (-x * t).exp())
        .sum())
}

pub const DEFAULT_TRANSFORM_STEP: f64 = 0.05;
pub const DEFAULT_TRANSFORM_MU_MAX: f64 = 12.0;

/// Default μ grid for the u-transform pair.
pub fn transform_grid() -> SpectralGrid {
    SpectralGrid::simpson(DEFAULT_TRANSFORM_MU_MAX, DEFAULT_TRANSFORM_STEP).expect("static grid")
}

/// `f̂(μ) = ∫₀¹ f(x) u(x;μ) dx` on a μ grid. The eigenfunctions are real on
/// `(0,1]`, so the coefficients of a real `f` are real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTransform {
    pub mu_grid: SpectralGrid,
    pub coefficients: Vec<f64>,
    /// `‖f‖₂²` measured on the input rule.
    pub norm_sq: f64,
    /// `|f̂(μ_max)|² μ_max`, a proxy for the mass beyond the grid.
    pub tail_estimate: f64,
}

impl UTransform {
    /// Spectral density `μ tanh(πμ)` times the quadrature weight at node `k`.
    fn density(&self, k: usize) -> f64 {
        let mu = self.mu_grid.mu_nodes[k];
        self.mu_grid.weights[k] * mu * (PI * mu).tanh()
    }

    /// `∫ |f̂(μ)|² μ tanh(πμ) dμ`, equal to `‖f‖₂²` by Plancherel.
    pub fn plancherel_sum(&self) -> f64 {
        (0..self.coefficients.len())
            .map(|k| self.coefficients[k].powi(2) * self.density(k))
            .sum()
    }

    /// True when the tail proxy exceeds `share` of `‖f‖₂²`.
    pub fn tail_warning(&self, share: f64) -> bool {
        self.tail_estimate > share * self.norm_sq
    }
}

pub fn u_forward(f: &UnitGridFunction, grid: &SpectralGrid) -> UTransform {
    let coefficients: Vec<f64> = grid
        .mu_nodes
        .par_iter()
        .map(|&mu| {
            f.nodes
                .iter()
                .zip(&f.weights)
                .zip(&f.values)
                .map(|((&x, w), v)| w * v * u_real(x, mu))
                .sum()
        })
        .collect();
    let mu_max = grid.mu_nodes.last().copied().unwrap_or(0.0);
    let last = coefficients.last().copied().unwrap_or(0.0);
    UTransform {
        mu_grid: grid.clone(),
        tail_estimate: last * last * mu_max,
        norm_sq: f.l2_norm().powi(2),
        coefficients,
    }
}

/// `f(x) = ∫ f̂(μ) u(x;μ) μ tanh(πμ) dμ` for `x ∈ (0,1]`.
pub fn u_inverse(tf: &UTransform, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(domain(format!("x = {x}"), "0 < x <= 1"));
    }
    Ok((0..tf.coefficients.len())
        .filter(|&k| tf.coefficients[k] != 0.0)
        .map(|k| tf.coefficients[k] * u_real(x, tf.mu_grid.mu_nodes[k]) * tf.density(k))
        .sum())
}

/// Eigenvalue of `L` belonging to `u(·;μ)`.
pub fn l_eigenvalue(mu: f64) -> f64 {
    mu * mu + 0.25
}

/// `max_x |Lu − (μ²+1/4)u| / max_x |u|` over the probes, with
/// `Lu = −(x²(1−x²)u′)′ + 2x²u` from centred differences at steps `h` and `2h`
/// combined by Richardson extrapolation. The residual is scaled by the largest
/// `|u|` on the probes rather than pointwise, since `u` has zeros in `(0,1)`.
pub fn diffop_l_residual(mu: f64, probes: &[f64], h: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(domain(format!("mu = {mu}"), "mu >= 0"));
    }
    if probes.iter().any(|&x| !(x - 2.0 * h > 0.0 && x + 2.0 * h < 1.0)) {
        return Err(domain("probe".to_string(), "probes inside (2h, 1-2h)"));
    }
    let p = |x: f64| x * x * (1.0 - x * x);
    let lu = |x: f64, h: f64| {
        let (um, u0, up) = (u_real(x - h, mu), u_real(x, mu), u_real(x + h, mu));
        let flux = p(x + 0.5 * h) * (up - u0) - p(x - 0.5 * h) * (u0 - um);
        -flux / (h * h) + 2.0 * x * x * u0
    };
    let lam = l_eigenvalue(mu);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &x in probes {
        let lx = (4.0 * lu(x, h) - lu(x, 2.0 * h)) / 3.0;
        let u = u_real(x, mu);
        worst = worst.max((lx - lam * u).abs());
        scale = scale.max(u.abs());
    }
    Ok(worst / scale)
}

/// `‖Ku − νu‖₂ / ‖u‖₂` for `u = u(·;μ)`, measured at `n_probe`
/// Gauss-Legendre nodes. `K` itself acts through the exponential rule, which
/// resolves the `x^{-1/2}` endpoint oscillation of `u`.
pub fn eigen_residual(mu: f64, n_probe: usize) -> Result<f64> {
    let f = UnitGridFunction::exp_rule(|y| u_real(y, mu))?;
    let nu = eigenvalue_nu(mu);
    let (x, w) = quad::gauss_legendre(n_probe, 0.0, 1.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let u = u_real(*xi, mu);
        let ku = apply_k(&f, *xi)?;
        num += wi * (ku - nu * u).powi(2);
        den += wi * u * u;
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one() -> UnitGridFunction {
        UnitGridFunction::gauss_legendre(200, |_| 1.0).unwrap()
    }

    #[test]
    fn k_of_constant() {
        assert_relative_eq!(apply_k(&one(), 1.0).unwrap(), 2f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(apply_k(&one(), 3.0).unwrap(), (4.0f64 / 3.0).ln(), epsilon = 1e-10);
        let z = apply_k_complex(&one(), C64::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(z.re, 2f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn lambda_examples() {
        assert_relative_eq!(apply_lambda(&one(), 0.0).unwrap(), 1.0, epsilon = 1e-14);
        let e2 = (1.0 - (-2f64).exp()) / 2.0;
        assert_relative_eq!(apply_lambda(&one(), 2.0).unwrap(), e2, epsilon = 1e-13);
        let ex = UnitGridFunction::gauss_legendre(200, |x| (-x).exp()).unwrap();
        assert_relative_eq!(apply_lambda(&ex, 1.0).unwrap(), e2, epsilon = 1e-13);
    }

    #[test]
    fn eigen_relation_at_probe_points() {
        let f = UnitGridFunction::exp_rule(|y| u_real(y, 1.0)).unwrap();
        for x in [0.3, 0.7] {
            let ku = apply_k(&f, x).unwrap();
            let rhs = eigenvalue_nu(1.0) * u_real(x, 1.0);
            assert!((ku / rhs - 1.0).abs() < 1e-6, "{x}: {ku} vs {rhs}");
        }
    }

    #[test]
    fn eigen_residual_small() {
        for mu in [0.5, 1.0, 2.0, 5.0] {
            let r = eigen_residual(mu, 200).unwrap();
            assert!(r < 1e-6, "mu {mu}: {r}");
        }
    }

    #[test]
    fn grid_validation() {
        assert!(UnitGridFunction::new(vec![0.5, 0.4], vec![0.5, 0.5], vec![1.0, 1.0]).is_err());
        assert!(UnitGridFunction::new(vec![0.4, 0.5], vec![0.5, 0.4], vec![1.0, 1.0]).is_err());
        assert!(UnitGridFunction::new(vec![0.4, 0.5], vec![0.5, 0.5], vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn zero_transform() {
        let f = UnitGridFunction::exp_rule(|_| 0.0).unwrap();
        let tf = u_forward(&f, &transform_grid());
        assert!(tf.coefficients.iter().all(|&c| c == 0.0));
        assert_eq!(u_inverse(&tf, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn plancherel_for_resolvent_kernel() {
        let f = UnitGridFunction::exp_rule(|x| 1.0 / (2.0 + x)).unwrap();
        let tf = u_forward(&f, &transform_grid());
        assert!((tf.plancherel_sum() - 1.0 / 6.0).abs() < 1e-5, "{}", tf.plancherel_sum());
        assert!(!tf.tail_warning(1e-6));
    }

    #[test]
    fn inverse_at_one_is_plain_moment() {
        let f = UnitGridFunction::exp_rule(|x| (-x).exp()).unwrap();
        let tf = u_forward(&f, &transform_grid());
        let direct: f64 = (0..tf.coefficients.len()).map(|k| tf.coefficients[k] * tf.density(k)).sum();
        assert_eq!(u_inverse(&tf, 1.0).unwrap(), direct);
    }

    #[test]
    fn diffop_residuals() {
        let probes = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert!(diffop_l_residual(1.0, &probes, 1e-4).unwrap() <= 1e-5);
        assert!(diffop_l_residual(5.0, &probes, 1e-4).unwrap() <= 1e-4);
        assert_eq!(l_eigenvalue(0.0), 0.25);
    }
}
