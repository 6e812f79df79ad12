//! Quadrature rules and scalar solvers shared by the numerical modules.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights mapped to `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let rule = GaussLegendre::new(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .unzip()
}

/// Rule for `∫₀¹ f(x) dx` with `f` allowed an integrable singularity like
/// `x^{-1/2}` at the origin. Substitutes `x = e^{-s}` and applies composite
/// Gauss-Legendre on `s ∈ [0, 80]`, one panel per unit length.
pub fn exp_substitution_rule() -> (Vec<f64>, Vec<f64>) {
    const PANELS: usize = 80;
    const ORDER: usize = 16;
    let (s0, w0) = gauss_legendre(ORDER, 0.0, 1.0);
    let mut nodes = Vec::with_capacity(PANELS * ORDER);
    let mut weights = Vec::with_capacity(PANELS * ORDER);
    // descending s gives ascending x
    for p in (0..PANELS).rev() {
        for (s, w) in s0.iter().zip(&w0).rev() {
            let s = p as f64 + s;
            let x = (-s).exp();
            nodes.push(x);
            weights.push(w * x);
        }
    }
    (nodes, weights)
}

/// Composite Simpson weights on `n_intervals` (rounded up to even) of width `h`.
pub fn simpson_weights(n_intervals: usize, h: f64) -> Vec<f64> {
    let n = n_intervals + n_intervals % 2;
    let mut w = vec![0.0; n + 1];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == n {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    w
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration on a finite interval.
/// Returns the integral and its error estimate.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    const MAX_INTERVALS: usize = 4000;
    let mut parts = vec![(a, b, gk15(&mut f, a, b))];
    loop {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { estimate: err });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&mut f, lo, mid)));
        parts.push((mid, hi, gk15(&mut f, mid, hi)));
    }
}

/// Adaptive integration over `[0, ∞)` via `u = v/(1-v)`.
pub fn adaptive_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    adaptive(
        |v| {
            let d = 1.0 - v;
            if d <= 0.0 {
                return 0.0;
            }
            let u = v / d;
            f(u) / (d * d)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Root of `f` on a bracket `[a, b]` by the Illinois variant of regula falsi.
pub fn bracketed_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    x_tol: f64,
) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket {
            lo: a,
            hi: b,
            detail: format!("f(lo) = {fa:.3e}, f(hi) = {fb:.3e}"),
        });
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < x_tol {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < x_tol {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_log_kernel() {
        let (x, w) = gauss_legendre(200, 0.0, 1.0);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w / (1.0 + x)).sum();
        assert!((s - 2f64.ln()).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn exp_rule_handles_inverse_sqrt() {
        let (x, w) = exp_substitution_rule();
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w / x.sqrt()).sum();
        assert!((s - 2.0).abs() < 1e-13, "{s}");
        let one: f64 = w.iter().sum();
        assert!((one - 1.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let w = simpson_weights(10, 0.1);
        let s: f64 = w
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i as f64 * 0.1).powi(3))
            .sum();
        assert!((s - 0.25).abs() < 1e-14);
    }

    #[test]
    fn adaptive_half_line_matches_closed_form() {
        let (v, _) = adaptive_half_line(|u| 1.0 / (1.0 + u * u), 1e-13, 1e-13).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    }

    #[test]
    fn root_and_minimum() {
        let r = bracketed_root(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let (m, _) = golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((m - 0.3).abs() < 1e-8);
        assert!(bracketed_root(|x| x * x + 1.0, 0.0, 1.0, 1e-12).is_err());
    }
}
