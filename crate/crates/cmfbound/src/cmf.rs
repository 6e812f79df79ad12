//! Completely monotone functions given by finite atomic measures,
//! `f(x) = Σ a_j e^{-x t_j}`, and the exponential moments they need.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `∫₀¹ x^k e^{-xs} dx` for `k ∈ {0, 1, 2}` and `s ≥ 0`.
pub fn moment(k: u32, s: f64) -> f64 {
    debug_assert!(k <= 2);
    if s < 3.0 {
        // Σ (-s)^n / (n! (n+k+1))
        let mut term = 1.0;
        let mut sum = 1.0 / (k as f64 + 1.0);
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -s / n;
            let add = term / (n + k as f64 + 1.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                return sum;
            }
        }
    }
    let e = (-s).exp();
    let g0 = -(-s).exp_m1() / s;
    if k == 0 {
        return g0;
    }
    let g1 = (g0 - e) / s;
    if k == 1 {
        return g1;
    }
    (2.0 * g1 - e) / s
}

/// `g(s) = (1 - e^{-s})/s`, with `g(0) = 1`: the Gram entry of two exponentials.
pub fn gram(s: f64) -> f64 {
    moment(0, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub a: f64,
}

/// Finite positive atomic measure; atoms sorted by `t`, distinct, weights > 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CmfMeasure {
    atoms: Vec<Atom>,
}

impl CmfMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<Atom> = Vec::new();
        for (t, a) in atoms {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidArgument(format!("atom location t = {t} must be >= 0")));
            }
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("atom weight a = {a} must be > 0")));
            }
            v.push(Atom { t, a });
        }
        v.sort_by(|x, y| x.t.total_cmp(&y.t));
        let mut merged: Vec<Atom> = Vec::with_capacity(v.len());
        for at in v {
            match merged.last_mut() {
                Some(last) if last.t == at.t => last.a += at.a,
                _ => merged.push(at),
            }
        }
        Ok(Self { atoms: merged })
    }

    /// The zero measure.
    pub fn zero() -> Self {
        Self { atoms: Vec::new() }
    }

    /// `e^{-x}`.
    pub fn exponential() -> Self {
        Self {
            atoms: vec![Atom { t: 1.0, a: 1.0 }],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.atoms.iter().map(|at| at.a * (-x * at.t).exp()).sum()
    }

    pub fn eval_complex(&self, z: C64) -> C64 {
        self.atoms.iter().map(|at| at.a * (-z * at.t).exp()).sum()
    }

    /// `(Λf)(t) = ∫₀¹ e^{-xt} f(x) dx` in closed form.
    pub fn laplace_moment(&self, t: f64) -> f64 {
        self.atoms.iter().map(|at| at.a * gram(t + at.t)).sum()
    }

    /// `d^k/dt^k (Λf)(t)` for `k ≤ 2`.
    pub fn laplace_moment_derivative(&self, k: u32, t: f64) -> f64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * self.atoms.iter().map(|at| at.a * moment(k, t + at.t)).sum::<f64>()
    }

    /// `‖f‖₂²` on `(0,1)` from the Gram entries.
    pub fn l2_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        for p in &self.atoms {
            for q in &self.atoms {
                s += p.a * q.a * gram(p.t + q.t);
            }
        }
        s
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().max(0.0).sqrt()
    }

    /// `Σ a_j/(t_j + 1)`, bounded above by the L²(0,1) norm.
    pub fn star_norm(&self) -> f64 {
        self.atoms.iter().map(|at| at.a / (at.t + 1.0)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|at| at.a).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_match_quadrature() {
        let (x, w) = crate::quad::gauss_legendre(60, 0.0, 1.0);
        for s in [0.0, 1e-9, 0.5, 2.999, 3.0, 7.0, 40.0] {
            for k in 0..3 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32) * (-x * s).exp()).sum();
                assert_relative_eq!(moment(k, s), q, max_relative = 1e-14);
            }
        }
        assert_eq!(gram(0.0), 1.0);
        assert_relative_eq!(gram(1.0), 1.0 - (-1f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn measure_normalises_atoms() {
        let m = CmfMeasure::new([(2.0, 1.0), (0.0, 0.5), (2.0, 0.25)]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.atoms()[0].t, 0.0);
        assert_eq!(m.atoms()[1].a, 1.25);
        assert!(CmfMeasure::new([(1.0, -1.0)]).is_err());
        assert!(CmfMeasure::new([(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn norms_of_exponential() {
        let e = CmfMeasure::exponential();
        assert_relative_eq!(e.l2_norm_sq(), (1.0 - (-2f64).exp()) / 2.0, max_relative = 1e-15);
        assert!(e.star_norm() <= e.l2_norm());
        assert_relative_eq!(e.laplace_moment(1.0), (1.0 - (-2f64).exp()) / 2.0, max_relative = 1e-15);
    }
}
