//! Special functions attached to the kernel `1/(x+y)` on `[0,1]`: the
//! conformal angle `α(z)`, the amplitude `R(z)`, the eigenvalues `ν(μ)`, the
//! eigenfunctions `u(z;μ)` and the closed-form power-law exponent and constant.
//!
//! The eigenfunction is `u(z;μ) = z^{-1/2+iμ} F(1/4+iμ/2, 3/4+iμ/2; 1; 1-z²)`,
//! normalised by `u(1;μ) = 1`. It is evaluated through whichever convergent
//! hypergeometric expansion applies, an Euler integral, or the large-`μ`
//! asymptotic form.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const OMEGA: &str = "Re z > 0, z not in [0,1]";

/// Default order at which complex points leave the Euler integral for the
/// asymptotic formula.
pub const DEFAULT_MU_SWITCH: f64 = 20.0;

/// True when `z` lies in the slit half-plane where `α`, `R` and the analytic
/// extensions are defined.
pub fn in_omega(z: C64) -> bool {
    z.re > 0.0 && z.re.is_finite() && z.im.is_finite() && !(z.im == 0.0 && z.re <= 1.0)
}

fn require_omega(z: C64) -> Result<()> {
    if in_omega(z) {
        Ok(())
    } else {
        Err(domain(format!("z = {z}"), OMEGA))
    }
}

/// `α(z) = arccos(1/z)` on principal branches.
pub fn alpha(z: C64) -> Result<C64> {
    require_omega(z)?;
    if z.im == 0.0 {
        return Ok(C64::new((1.0 / z.re).acos(), 0.0));
    }
    Ok(z.inv().acos())
}

/// `R(z) = z^{-1/2} (z² - 1)^{-1/4}` on principal branches.
pub fn r_factor(z: C64) -> Result<C64> {
    require_omega(z)?;
    if z.im == 0.0 {
        let x = z.re;
        return Ok(C64::new(x.powf(-0.5) * ((x - 1.0) * (x + 1.0)).powf(-0.25), 0.0));
    }
    Ok(z.powf(-0.5) * (z * z - 1.0).powf(-0.25))
}

/// `β(z) = (α(x₀) + α(z))/π`.
pub fn beta(x0: f64, z: C64) -> Result<C64> {
    let a0 = if x0 == 1.0 {
        C64::new(0.0, 0.0)
    } else {
        alpha(C64::new(x0, 0.0))?
    };
    Ok((a0 + alpha(z)?) / PI)
}

/// Eigenvalue `ν(μ) = π/cosh(πμ)` of the kernel `1/(x+y)` on `[0,1]`.
pub fn eigenvalue_nu(mu: f64) -> f64 {
    PI / (PI * mu).cosh()
}

/// Power-law exponent `γ*(x₀) = (2/π) arcsin(1/x₀)`.
pub fn gamma_star(x0: f64) -> Result<f64> {
    if !(x0 >= 1.0) || !x0.is_finite() {
        return Err(domain(format!("x0 = {x0}"), "x0 >= 1"));
    }
    Ok(2.0 / PI * (1.0 / x0).asin())
}

/// Constant `C*(x₀)` in `Δ*(ε) ~ C*(x₀) ε^{γ*(x₀)}`; defined for `x₀ > 1`.
pub fn c_star(x0: f64) -> Result<f64> {
    if !(x0 > 1.0) || !x0.is_finite() {
        return Err(domain(format!("x0 = {x0}"), "x0 > 1"));
    }
    let s = (1.0 / x0).asin();
    let c = (1.0 / x0).acos();
    let amp = (x0 / (2.0 * (x0 - 1.0) * (x0 + 1.0) * s)).sqrt();
    Ok(0.5 * amp * (2.0 * PI * s / c).powf(c / PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub x0: f64,
    pub z: C64,
    pub alpha: C64,
    pub r_factor: C64,
    pub beta: C64,
    pub gamma_star: f64,
    /// `None` at `x₀ = 1`, where the law carries a logarithm instead.
    pub c_star: Option<f64>,
}

impl AsymptoticParams {
    pub fn new(x0: f64, z: C64) -> Result<Self> {
        let gamma_star = gamma_star(x0)?;
        Ok(Self {
            x0,
            z,
            alpha: alpha(z)?,
            r_factor: r_factor(z)?,
            beta: beta(x0, z)?,
            gamma_star,
            c_star: if x0 > 1.0 { Some(c_star(x0)?) } else { None },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Convergent hypergeometric expansion (exact up to rounding).
    Series,
    EulerIntegral,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionSample {
    pub mu: f64,
    pub point: C64,
    pub value: C64,
    pub method: EvalMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    pub mu_switch: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            mu_switch: DEFAULT_MU_SWITCH,
        }
    }
}

/// `u(point; μ)` with the default options.
pub fn eigfun_u(point: C64, mu: f64) -> Result<EigenfunctionSample> {
    eigfun_u_with(point, mu, &EigenOptions::default())
}

/// `u(point; μ)` for `point` in `(0,1]` or in `Ω`.
///
/// Real points always go through an exact expansion. Complex points use the
/// expansion around `z = 1` or `z = ∞` when one converges fast; otherwise the
/// Euler integral for `μ ≤ mu_switch` and the asymptotic formula above it.
pub fn eigfun_u_with(point: C64, mu: f64, opts: &EigenOptions) -> Result<EigenfunctionSample> {
    check_mu(mu)?;
    let sample = |value, method| EigenfunctionSample {
        mu,
        point,
        value,
        method,
    };
    if point.im == 0.0 && point.re > 0.0 && point.re.is_finite() {
        return Ok(sample(C64::new(u_real(point.re, mu), 0.0), EvalMethod::Series));
    }
    require_omega(point)?;
    if let Some(v) = series_complex(point, mu) {
        return Ok(sample(v, EvalMethod::Series));
    }
    if mu <= opts.mu_switch {
        Ok(sample(euler_integral(point, mu)?, EvalMethod::EulerIntegral))
    } else {
        Ok(sample(asymptotic_u(point, mu)?, EvalMethod::Asymptotic))
    }
}

/// `u(point; μ)` by a prescribed method, for cross-checks between branches.
pub fn eigfun_u_by(point: C64, mu: f64, method: EvalMethod) -> Result<EigenfunctionSample> {
    check_mu(mu)?;
    let real_unit = point.im == 0.0 && point.re > 0.0 && point.re <= 1.0;
    if !real_unit {
        require_omega(point)?;
    }
    let value = match method {
        EvalMethod::Series => {
            if point.im == 0.0 {
                C64::new(u_real(point.re, mu), 0.0)
            } else {
                series_complex(point, mu).ok_or_else(|| {
                    Error::InvalidArgument(format!("no fast series expansion at z = {point}"))
                })?
            }
        }
        EvalMethod::EulerIntegral => {
            let v = euler_integral(point, mu)?;
            if real_unit {
                let residue = v.im.abs() / v.norm().max(f64::MIN_POSITIVE);
                if residue > 1e-8 {
                    return Err(Error::ImaginaryResidue(residue));
                }
                C64::new(v.re, 0.0)
            } else {
                v
            }
        }
        EvalMethod::Asymptotic => asymptotic_u(point, mu)?,
    };
    Ok(EigenfunctionSample {
        mu,
        point,
        value,
        method,
    })
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("mu = {mu}"), "mu >= 0"))
    }
}

/// Real eigenfunction `u(x; μ)` for any `x > 0`.
pub fn u_real(x: f64, mu: f64) -> f64 {
    if x == 1.0 {
        1.0
    } else if x > 1.0 {
        ln_u_above_one(x, mu).exp()
    } else {
        u_below_one(x, mu)
    }
}

/// `ln u(x; μ)` for real `x ≥ 1`, where `u` is positive and grows like
/// `e^{μ α(x)}`; stays finite where `u` itself would overflow.
pub fn ln_u_above_one(x: f64, mu: f64) -> f64 {
    if x == 1.0 {
        return 0.0;
    }
    if x <= 10.0 {
        ln_pfaff_positive(x, mu)
    } else {
        ln_connection_infinity(x, mu)
    }
}

// (1/x) F(a, ā; 1; w), w = 1 - 1/x², a = 1/4 + iμ/2: every term is positive.
fn ln_pfaff_positive(x: f64, mu: f64) -> f64 {
    let w = 1.0 - 1.0 / (x * x);
    let q = 0.25 * mu * mu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut ln_scale = 0.0f64;
    let mut k = 0.0f64;
    loop {
        let ratio = ((0.25 + k) * (0.25 + k) + q) / ((k + 1.0) * (k + 1.0)) * w;
        term *= ratio;
        sum += term;
        k += 1.0;
        if sum > 1e250 {
            term *= 1e-250;
            sum *= 1e-250;
            ln_scale += 250.0 * std::f64::consts::LN_10;
        }
        if ratio < 1.0 && term < 1e-17 * sum * (1.0 - ratio) {
            break;
        }
        if k > 5e6 {
            break;
        }
    }
    ln_scale + sum.ln() - x.ln()
}

// Expansion around z = ∞:
// u = (1/z)[A F(a,ā;1/2;1/z²) + (B/z) F(1-a,1-ā;3/2;1/z²)],
// A = √π/|Γ(3/4+iμ/2)|², B = -2√π/|Γ(1/4+iμ/2)|².
// ln A and ln(|B|/A); the ratio carries all the cancellation, so it goes
// through the dedicated Γ(z+1/2)/Γ(z) series.
fn connection_infinity_logs(mu: f64) -> (f64, f64) {
    let ln_a = 0.5 * PI.ln() - 2.0 * ln_gamma(C64::new(0.75, 0.5 * mu)).re;
    let ln_r = 2f64.ln() + 2.0 * ln_gamma_half_ratio(C64::new(0.25, 0.5 * mu)).re;
    (ln_a, ln_r)
}

// Partial sums of F(a,ā;1/2;y) and F(1-a,1-ā;3/2;y); both have positive
// coefficients.
fn infinity_sums(y: C64, mu: f64) -> (C64, C64) {
    let q = 0.25 * mu * mu;
    let (mut s1, mut t1) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let (mut s2, mut t2) = (s1, t1);
    let ay = y.norm();
    let mut k = 0.0f64;
    loop {
        let r1 = ((0.25 + k) * (0.25 + k) + q) / ((0.5 + k) * (k + 1.0));
        let r2 = ((0.75 + k) * (0.75 + k) + q) / ((1.5 + k) * (k + 1.0));
        t1 *= y * r1;
        t2 *= y * r2;
        s1 += t1;
        s2 += t2;
        k += 1.0;
        let settled = |t: C64, s: C64, r: f64| r * ay < 1.0 && t.norm() < 1e-17 * s.norm() * (1.0 - r * ay);
        if (settled(t1, s1, r1) && settled(t2, s2, r2)) || k > 1e6 {
            break;
        }
    }
    (s1, s2)
}

fn ln_connection_infinity(x: f64, mu: f64) -> f64 {
    let (s1, s2) = infinity_sums(C64::new(1.0 / (x * x), 0.0), mu);
    let (ln_a, ln_r) = connection_infinity_logs(mu);
    let r = ln_r.exp();
    ln_a - x.ln() + (s1.re - r * s2.re / x).ln()
}

/// Expansion around `z = 1` (Pfaff form) or `z = ∞` for complex `z`, when
/// one converges quickly without heavy cancellation.
fn series_complex(z: C64, mu: f64) -> Option<C64> {
    const MAX_LOSS: f64 = 1e6;
    let z2 = z * z;
    let w = 1.0 - z2.inv();
    let y = z2.inv();
    if w.norm() <= 0.7 {
        let q = 0.25 * mu * mu;
        let (mut s, mut t) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        let mut abs_sum = 1.0;
        let mut k = 0.0f64;
        loop {
            let r = ((0.25 + k) * (0.25 + k) + q) / ((k + 1.0) * (k + 1.0));
            t *= w * r;
            s += t;
            abs_sum += t.norm();
            k += 1.0;
            let rw = r * w.norm();
            if (rw < 1.0 && t.norm() < 1e-17 * abs_sum * (1.0 - rw)) || k > 1e6 {
                break;
            }
        }
        if abs_sum <= MAX_LOSS * s.norm() {
            return Some(s / z);
        }
    }
    if y.norm() <= 0.7 {
        let (s1, s2) = infinity_sums(y, mu);
        let (ln_a, ln_r) = connection_infinity_logs(mu);
        let r = ln_r.exp();
        let inner = s1 - s2 * r / z;
        if s1.norm() + r * s2.norm() / z.norm() <= MAX_LOSS * inner.norm() {
            return Some((ln_a - z.ln() + inner.ln()).exp());
        }
    }
    None
}

fn u_below_one(x: f64, mu: f64) -> f64 {
    let y = (1.0 - x) * (1.0 + x);
    let ln_x = x.ln();
    if y <= 0.5 && mu * y.sqrt() <= 12.0 {
        // x^{-1/2+iμ} F(a, b; 1; 1-x²)
        let a = C64::new(0.25, 0.5 * mu);
        let b = C64::new(0.75, 0.5 * mu);
        let (mut s, mut t) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        let mut k = 0.0f64;
        loop {
            t *= (a + k) * (b + k) * (y / ((k + 1.0) * (k + 1.0)));
            s += t;
            k += 1.0;
            if (t.norm() < 1e-17 * s.norm() && k > 2.0 * mu * y) || k > 1e5 {
                break;
            }
        }
        return x.powf(-0.5) * (C64::from_polar(1.0, mu * ln_x) * s).re;
    }
    // Expansion around x = 0: u = 2 x^{-1/2} Re[T(μ) x^{iμ} F(a, b; 1+iμ; x²)]
    // with T(μ) = Γ(-iμ) / (√(2π) 2^{iμ} Γ(1/2-iμ)). The two conjugate
    // terms merge at μ = 0, so μ is floored where the O(μ²) shift is invisible.
    let mu = mu.max(1e-6);
    let a = C64::new(0.25, 0.5 * mu);
    let b = C64::new(0.75, 0.5 * mu);
    let c = C64::new(1.0, mu);
    let ln_t = ln_gamma_half_ratio(C64::new(0.5, -mu)) - C64::new(mu.ln(), -FRAC_PI_2)
        - 0.5 * (2.0 * PI).ln()
        - C64::new(0.0, mu * 2f64.ln());
    let x2 = x * x;
    let (mut s, mut t) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let mut k = 0.0f64;
    loop {
        t *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * x2;
        s += t;
        k += 1.0;
        if (t.norm() < 1e-17 * s.norm() && k > mu) || k > 1e6 {
            break;
        }
    }
    2.0 * x.powf(-0.5) * ((ln_t + C64::new(0.0, mu * ln_x)).exp() * s).re
}

fn ln_sigma(s: f64) -> f64 {
    if s >= 0.0 {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

/// Euler integral
/// `u = z^{-1/2+iμ} sin(π(3/4+iμ/2))/π ∫₀¹ t^{-1/4+iμ/2}(1-t)^{-3/4-iμ/2}(1-(1-z²)t)^{-1/4-iμ/2} dt`
/// after the logistic substitution `t = 1/(1+e^{-s})`, which turns both
/// endpoint singularities into exponential decay. Trapezoidal sums on the
/// real line converge geometrically; the step is halved until two levels
/// agree.
pub fn euler_integral(z: C64, mu: f64) -> Result<C64> {
    const S_LO: f64 = -60.0;
    const S_HI: f64 = 200.0;
    let zz1 = z * z - 1.0;
    let expo = C64::new(-0.25, -0.5 * mu);
    let f = |s: f64| -> C64 {
        let ls = ln_sigma(s);
        let amp = (0.75 * ls + 0.25 * ln_sigma(-s)).exp();
        let base = 1.0 + zz1 * ls.exp();
        C64::from_polar(amp, 0.5 * mu * s) * (expo * base.ln()).exp()
    };
    let pref = (C64::new(-0.5, mu) * z.ln()).exp() * C64::new(0.75 * PI, 0.5 * PI * mu).sin() / PI;

    let mut h = 0.05f64.min(1.5 / mu.max(1.0));
    let mut n = ((S_HI - S_LO) / h).ceil() as usize;
    h = (S_HI - S_LO) / n as f64;
    let mut sum: C64 = (0..=n).map(|i| f(S_LO + i as f64 * h)).sum();
    let mut integral = sum * h;
    let mut estimate = f64::INFINITY;
    for _ in 0..4 {
        let mid: C64 = (0..n).map(|i| f(S_LO + (i as f64 + 0.5) * h)).sum();
        sum += mid;
        n *= 2;
        h *= 0.5;
        let refined = sum * h;
        let value = pref * refined;
        estimate = ((refined - integral) * pref).norm() / value.norm().max(f64::MIN_POSITIVE);
        integral = refined;
        if estimate < 1e-9 {
            return Ok(value);
        }
    }
    if estimate < 1e-6 {
        Ok(pref * integral)
    } else {
        Err(Error::Quadrature { estimate })
    }
}

/// Large-`μ` form `u₀(z;μ) = R(z) e^{μ α(z)} / √(2πμ)`, relative error `O(1/μ)`.
pub fn asymptotic_u(z: C64, mu: f64) -> Result<C64> {
    if !(mu > 0.0) {
        return Err(domain(format!("mu = {mu}"), "mu > 0 for the asymptotic form"));
    }
    Ok(r_factor(z)? * (alpha(z)? * mu).exp() / (2.0 * PI * mu).sqrt())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

// B_2, B_4, ..., B_30
const BERNOULLI: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// `ln Γ(z+1/2) - ln Γ(z)` for `Re z > 0`, accurate to rounding even when
/// `|Im z|` is large and the two log-gammas are individually big.
pub(crate) fn ln_gamma_half_ratio(mut z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    while z.norm() < 8.0 {
        acc -= ((z + 0.5) / z).ln();
        z += 1.0;
    }
    // Σ_{n odd} -(2 - 2^{-n}) B_{n+1} / (n (n+1) z^n)
    let zi = z.inv();
    let zi2 = zi * zi;
    let mut p = zi;
    let mut sum = C64::new(0.0, 0.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        let n = (2 * j + 1) as f64;
        sum -= p * ((2.0 - 2f64.powf(-n)) * b / (n * (n + 1.0)));
        p *= zi2;
    }
    acc + 0.5 * z.ln() + sum
}

/// Principal-branch `ln Γ(z)` for `Re z > 0` (Lanczos, g = 7).
pub(crate) fn ln_gamma(mut z: C64) -> C64 {
    let mut shift = C64::new(0.0, 0.0);
    while z.re < 0.5 {
        shift -= z.ln();
        z += 1.0;
    }
    let z1 = z - 1.0;
    let mut acc = C64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += *c / (z1 + i as f64);
    }
    let t = z1 + LANCZOS_G + 0.5;
    shift + 0.5 * (2.0 * PI).ln() + (z1 + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    // 50-digit hypergeometric reference values for u(z; μ).
    const REFERENCE: [(f64, f64, f64, f64, f64); 13] = [
        (0.3, 0.0, 1.0, 0.86244775079208203, 0.0),
        (0.7, 0.0, 5.0, -0.4378788928076344, 0.0),
        (0.01, 0.0, 3.0, -3.6940442961804448, 0.0),
        (1e-20, 0.0, 2.0, -202491274.61405948, 0.0),
        (0.5, 0.0, 0.0, 1.8025725987208946, 0.0),
        (2.0, 0.0, 30.0, 1727442251886.7694, 0.0),
        (5.0, 0.0, 10.0, 22655.162810170443, 0.0),
        (20.0, 0.0, 40.0, 8.2752785815427661e+23, 0.0),
        (1.5, 0.0, 0.5, 0.72881099160324272, 0.0),
        (1.5, 0.5, 4.0, 5.3236155742422133, 3.2896214160839888),
        (3.0, 1.0, 2.0, 1.1891718462988102, -0.16615664551579256),
        (0.6, 0.9, 3.0, 2.7127745071786645, 5.7963670690491819),
        (0.2, 0.1, 1.5, -1.1069317845025056, 0.99032540806305739),
    ];

    #[test]
    fn eigenfunction_matches_reference_values() {
        for (re, im, mu, vr, vi) in REFERENCE {
            let s = eigfun_u(c(re, im), mu).unwrap();
            let err = (s.value - c(vr, vi)).norm() / c(vr, vi).norm();
            assert!(err < 1e-9, "z = {re}+{im}i mu = {mu}: {:?} err {err:e}", s.value);
        }
    }

    #[test]
    fn euler_integral_agrees_with_series() {
        for (re, im, mu) in [(0.3, 0.0, 1.0), (0.7, 0.0, 5.0), (2.0, 0.0, 3.0), (1.5, 0.5, 4.0), (3.0, 1.0, 2.0)] {
            let z = c(re, im);
            let e = euler_integral(z, mu).unwrap();
            let s = eigfun_u(z, mu).unwrap().value;
            assert!((e - s).norm() < 1e-9 * s.norm(), "{z} {mu}: {e} vs {s}");
        }
    }

    #[test]
    fn unit_point_is_exactly_one() {
        for mu in [0.0, 0.3, 7.0, 55.0, 400.0] {
            assert_eq!(eigfun_u(c(1.0, 0.0), mu).unwrap().value, c(1.0, 0.0));
        }
    }

    #[test]
    fn asymptotic_branch_at_order_thirty() {
        let z = c(2.0, 0.0);
        let e = eigfun_u_by(z, 30.0, EvalMethod::EulerIntegral).unwrap().value;
        let a = eigfun_u_by(z, 30.0, EvalMethod::Asymptotic).unwrap().value;
        assert!((e / a - 1.0).norm() <= 0.05);
    }

    #[test]
    fn overlap_band_is_consistent() {
        let sw = DEFAULT_MU_SWITCH;
        for z in [c(2.0, 0.0), c(1.5, 0.5), c(3.0, 1.0)] {
            let mut mu = sw - 5.0;
            while mu <= sw + 5.0 {
                let e = eigfun_u_by(z, mu, EvalMethod::EulerIntegral).unwrap().value;
                let a = eigfun_u_by(z, mu, EvalMethod::Asymptotic).unwrap().value;
                assert!((e / a - 1.0).norm() <= 2.0 / sw, "{z} {mu}");
                mu += 0.5;
            }
        }
    }

    #[test]
    fn switch_selects_branch_for_far_points() {
        let z = c(0.6, 0.9);
        assert_eq!(eigfun_u(z, 3.0).unwrap().method, EvalMethod::EulerIntegral);
        assert_eq!(eigfun_u(z, 25.0).unwrap().method, EvalMethod::Asymptotic);
        let opts = EigenOptions { mu_switch: 30.0 };
        assert_eq!(eigfun_u_with(z, 25.0, &opts).unwrap().method, EvalMethod::EulerIntegral);
    }

    #[test]
    fn real_branches_join_continuously() {
        // crossings between the expansions around 0 and around 1
        for mu in [0.0, 0.01, 2.0, 16.0, 40.0, 90.0] {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for x in [s - 1e-5, s + 1e-5, 0.95, 0.99, 0.999] {
                let v = u_below_one(x, mu);
                let e = 1e-7;
                let (l, r) = (u_below_one(x - e, mu), u_below_one(x + e, mu));
                assert!((v - 0.5 * (l + r)).abs() < 1e-6 * (1.0 + v.abs()), "{x} {mu}");
            }
        }
        for mu in [0.0, 5.0, 50.0] {
            let a = ln_pfaff_positive(10.0, mu);
            let b = ln_connection_infinity(10.0, mu);
            assert!((a - b).abs() < 1e-10, "{mu}: {a} {b}");
        }
    }

    #[test]
    fn euler_on_unit_interval_is_real() {
        let s = eigfun_u_by(c(0.4, 0.0), 2.0, EvalMethod::EulerIntegral).unwrap();
        assert_eq!(s.value.im, 0.0);
        assert_relative_eq!(s.value.re, u_real(0.4, 2.0), max_relative = 1e-9);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(c(0.5, 0.0)).re, 0.5 * PI.ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(c(5.0, 0.0)).re, 24f64.ln(), epsilon = 1e-13);
        for y in [0.1, 1.0, 10.0, 100.0] {
            let lg = ln_gamma(c(0.0, y));
            let exact = 0.5 * (PI / (y * (PI * y).sinh())).ln();
            assert_relative_eq!(lg.re, exact, epsilon = 1e-12, max_relative = 1e-13);
            let half = ln_gamma(c(0.5, y));
            assert_relative_eq!(2.0 * half.re, (PI / (PI * y).cosh()).ln(), epsilon = 1e-12, max_relative = 1e-13);
        }
    }

    #[test]
    fn half_ratio_matches_log_gamma_difference() {
        for z in [c(0.25, 0.0), c(0.5, -3.0), c(2.0, 1.0), c(0.25, 12.5), c(0.5, -80.0)] {
            let d = ln_gamma(z + 0.5) - ln_gamma(z);
            let r = ln_gamma_half_ratio(z);
            assert!((d - r).norm() < 1e-12 * (1.0 + z.norm()), "{z}: {d} {r}");
        }
        // Γ(1)/Γ(1/2) = 1/√π
        assert_relative_eq!(ln_gamma_half_ratio(c(0.5, 0.0)).re, -0.5 * PI.ln(), epsilon = 1e-15);
    }

    #[test]
    fn alpha_examples() {
        assert_relative_eq!(alpha(c(2.0, 0.0)).unwrap().re, PI / 3.0, epsilon = 1e-15);
        assert!((alpha(c(1e6, 0.0)).unwrap().re - FRAC_PI_2).abs() < 1e-5);
        let a = alpha(C64::from_polar(1.0, PI / 4.0)).unwrap();
        assert!(a.re > PI / 4.0 && a.re < FRAC_PI_2);
        assert!(alpha(c(0.5, 0.0)).is_err());
        assert!(alpha(c(-1.0, 2.0)).is_err());
    }

    #[test]
    fn r_factor_examples() {
        assert_relative_eq!(r_factor(c(2.0, 0.0)).unwrap().re, 0.537285, epsilon = 1e-6);
        assert_relative_eq!(r_factor(c(2f64.sqrt(), 0.0)).unwrap().re, 0.840896, epsilon = 1e-6);
        // (z² - 1)^{-1/4} blows up only like a quartic root
        assert_relative_eq!(r_factor(c(1.0 + 1e-8, 0.0)).unwrap().re, 2e-8f64.powf(-0.25), max_relative = 1e-7);
        assert!(r_factor(c(1.0 + 1e-14, 0.0)).unwrap().norm() > 1e3);
        assert!(r_factor(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn nu_examples() {
        assert_eq!(eigenvalue_nu(0.0), PI);
        assert_relative_eq!(eigenvalue_nu(1.0), 0.2710149513994184, max_relative = 1e-15);
        assert!((eigenvalue_nu(1.0) - 0.271009).abs() < 1e-5);
        assert!(eigenvalue_nu(10.0) < 1e-12);
    }

    #[test]
    fn gamma_star_examples() {
        assert_eq!(gamma_star(1.0).unwrap(), 1.0);
        assert_relative_eq!(gamma_star(2.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(gamma_star(1e4).unwrap(), 2.0 / (PI * 1e4), max_relative = 1e-8);
        assert!(gamma_star(0.9).is_err());
    }

    #[test]
    fn c_star_examples() {
        assert_relative_eq!(c_star(2.0).unwrap(), 0.584287627481233, max_relative = 1e-13);
        assert!(c_star(1.0 + 1e-6).unwrap() > 10.0);
        assert!(c_star(1.0).is_err());
    }

    #[test]
    fn asymptotic_params_bundle() {
        let p = AsymptoticParams::new(2.0, c(3.0, 0.0)).unwrap();
        assert_relative_eq!(p.beta.re, (PI / 3.0 + (1.0f64 / 3.0).acos()) / PI, epsilon = 1e-15);
        assert_eq!(p.c_star, Some(c_star(2.0).unwrap()));
        assert!(AsymptoticParams::new(1.0, c(2.0, 0.0)).unwrap().c_star.is_none());
    }
}
