//! Local worst-case problem: among completely monotone `f` with
//! `f(x₀) = f₀(x₀) + δ`, minimise `‖f − f₀‖₂` on `(0,1)`.
//!
//! The minimiser `f_* = Σ a_j e^{-x t_j}` is characterised by the certificate
//! `Ĉ(t) = C(t) − m e^{-x₀t} ≥ 0` on `[0,∞)` with equality at every `t_j`, where
//! `C(t) = ∫₀¹ e^{-xt}(f_* − f₀) dx` is the Caprini function. The solver is an
//! exchange iteration: weights from a small equality-constrained QP, atom
//! positions polished by Newton steps on `Ĉ′`, and the global minimiser of `Ĉ`
//! inserted until the certificate holds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cmf::{gram, moment, CmfMeasure};
use crate::error::{domain, Error, Result};
use crate::quad;

/// Laplace-side view of a black-box `f₀`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The reference function `f₀`: explicit atoms, or callables for `f₀(x)` and
/// `(Λf₀)(t)` plus the constant `‖f₀‖₂²`. The solver touches `f₀` only
/// through these.
#[derive(Clone)]
pub enum F0 {
    Atoms(CmfMeasure),
    BlackBox {
        value: ScalarFn,
        laplace: ScalarFn,
        norm_sq: f64,
    },
}

impl Default for F0 {
    fn default() -> Self {
        F0::Atoms(CmfMeasure::zero())
    }
}

impl fmt::Debug for F0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F0::Atoms(m) => f.debug_tuple("Atoms").field(m).finish(),
            F0::BlackBox { norm_sq, .. } => f.debug_struct("BlackBox").field("norm_sq", norm_sq).finish_non_exhaustive(),
        }
    }
}

impl From<CmfMeasure> for F0 {
    fn from(m: CmfMeasure) -> Self {
        F0::Atoms(m)
    }
}

impl F0 {
    pub fn exponential() -> Self {
        F0::Atoms(CmfMeasure::exponential())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            F0::Atoms(m) => m.eval(x),
            F0::BlackBox { value, .. } => value(x),
        }
    }

    /// `d^k/dt^k (Λf₀)(t)`, `k ≤ 2`; black boxes are differentiated numerically.
    pub fn laplace(&self, k: u32, t: f64) -> f64 {
        match self {
            F0::Atoms(m) => m.laplace_moment_derivative(k, t),
            F0::BlackBox { laplace, .. } => {
                let h = 1e-3 * (1.0 + t);
                let f = |j: f64| laplace(t + j * h);
                match k {
                    0 => laplace(t),
                    // forward stencils where the central ones would leave t ≥ 0
                    1 if t < 2.0 * h => (-25.0 * f(0.0) + 48.0 * f(1.0) - 36.0 * f(2.0) + 16.0 * f(3.0) - 3.0 * f(4.0)) / (12.0 * h),
                    1 => (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h),
                    _ if t < 2.0 * h => {
                        (35.0 * f(0.0) - 104.0 * f(1.0) + 114.0 * f(2.0) - 56.0 * f(3.0) + 11.0 * f(4.0)) / (12.0 * h * h)
                    }
                    _ => (-f(-2.0) + 16.0 * f(-1.0) - 30.0 * f(0.0) + 16.0 * f(1.0) - f(2.0)) / (12.0 * h * h),
                }
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            F0::Atoms(m) => m.l2_norm_sq(),
            F0::BlackBox { norm_sq, .. } => *norm_sq,
        }
    }

    pub fn atoms(&self) -> Option<&CmfMeasure> {
        match self {
            F0::Atoms(m) => Some(m),
            F0::BlackBox { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalOptions {
    /// Upper end of the certificate search; `None` means `50 + 10 x₀`.
    pub t_max: Option<f64>,
    /// Points of the log-spaced search grid.
    pub search_points: usize,
    /// Stop when `min Ĉ ≥ −tol_cert · ‖f_* − f₀‖₂`, up to a rounding floor.
    pub tol_cert: f64,
    pub max_outer: usize,
    /// Drop atoms with `a_j < prune · Σa`.
    pub prune: f64,
    /// Merge atoms closer than this.
    pub merge: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            search_points: 4000,
            tol_cert: 1e-9,
            max_outer: 200,
            prune: 1e-12,
            merge: 1e-6,
        }
    }
}

impl LocalOptions {
    pub fn t_max_for(&self, x0: f64) -> f64 {
        self.t_max.unwrap_or(50.0 + 10.0 * x0)
    }
}

/// Result of a local solve.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CapriniState {
    #[serde(skip)]
    pub f0: F0,
    pub x0: f64,
    pub delta: f64,
    pub f0_at_x0: f64,
    pub f0_norm_sq: f64,
    pub support: CmfMeasure,
    pub m: f64,
    pub cert_min: f64,
    pub cert_argmin: f64,
    pub residual_l2: f64,
    pub iterations: usize,
    /// `‖f_* − f₀‖₂` after each outer iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertPoint {
    pub t: f64,
    pub c: f64,
    pub c_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub grid_min: f64,
    pub grid_argmin: f64,
    pub atom_max_abs: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CapriniState {
    /// `C^{(k)}(t)`, derivatives in `t`.
    pub fn caprini_c_deriv(&self, k: u32, t: f64) -> f64 {
        self.support.laplace_moment_derivative(k, t) - self.f0.laplace(k, t)
    }

    pub fn caprini_c(&self, t: f64) -> f64 {
        self.caprini_c_deriv(0, t)
    }

    pub fn caprini_c_hat(&self, t: f64) -> f64 {
        self.caprini_c(t) - self.m * (-self.x0 * t).exp()
    }

    /// `f_*(x₀) − f₀(x₀) − δ`.
    pub fn constraint_residual(&self) -> f64 {
        self.support.eval(self.x0) - self.f0_at_x0 - self.delta
    }

    pub fn certificate_trace(&self, ts: &[f64]) -> Vec<CertPoint> {
        ts.iter()
            .map(|&t| {
                let c = self.caprini_c(t);
                CertPoint {
                    t,
                    c,
                    c_hat: c - self.m * (-self.x0 * t).exp(),
                }
            })
            .collect()
    }

    /// Ĉ on `n` points (`t = 0` plus a log grid up to `t_max`) and at the atoms.
    pub fn check_certificate(&self, n: usize, t_max: f64) -> CertificateCheck {
        let grid = search_grid(n, t_max);
        let (mut gmin, mut garg) = (f64::INFINITY, 0.0);
        for &t in &grid {
            let v = self.caprini_c_hat(t);
            if v < gmin {
                gmin = v;
                garg = t;
            }
        }
        let atom_max_abs = self
            .support
            .atoms()
            .iter()
            .map(|at| self.caprini_c_hat(at.t).abs())
            .fold(0.0, f64::max);
        let threshold = 1e-8 * self.f0_norm_sq;
        CertificateCheck {
            grid_min: gmin,
            grid_argmin: garg,
            atom_max_abs,
            threshold,
            passed: gmin >= -threshold && atom_max_abs <= 1e-8,
        }
    }
}

/// `t = 0` followed by `n − 1` log-spaced points on `[1e-6, t_max]`.
pub fn search_grid(n: usize, t_max: f64) -> Vec<f64> {
    let n = n.max(3);
    let (l0, l1) = (1e-6f64.ln(), t_max.ln());
    let mut g = Vec::with_capacity(n);
    g.push(0.0);
    for i in 0..n - 1 {
        g.push((l0 + (l1 - l0) * i as f64 / (n - 2) as f64).exp());
    }
    g
}

/// `C(t)` for a state; see [`CapriniState::caprini_c`].
pub fn caprini_c(state: &CapriniState, t: f64) -> f64 {
    state.caprini_c(t)
}

// Weight problem on a fixed support:
// min ½aᵀGa − bᵀa  s.t.  cᵀa = r, a ≥ 0;  KKT  Ga − b − m c = λ ≥ 0, λᵢaᵢ = 0.
struct Qp {
    g: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    r: f64,
}

impl Qp {
    fn new(f0: &F0, x0: f64, r: f64, ts: &[f64]) -> Self {
        let n = ts.len();
        Self {
            g: DMatrix::from_fn(n, n, |i, j| gram(ts[i] + ts[j])),
            b: DVector::from_iterator(n, ts.iter().map(|&t| f0.laplace(0, t))),
            c: DVector::from_iterator(n, ts.iter().map(|&t| (-x0 * t).exp())),
            r,
        }
    }

    fn objective(&self, a: &DVector<f64>) -> f64 {
        0.5 * a.dot(&(&self.g * a)) - self.b.dot(a)
    }

    fn eqp(&self, free: &[usize]) -> Result<(DVector<f64>, f64)> {
        let k = free.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                m[(p, q)] = self.g[(i, j)];
            }
            m[(p, k)] = -self.c[i];
            m[(k, p)] = self.c[i];
            rhs[p] = self.b[i];
        }
        rhs[k] = self.r;
        let sol = m.lu().solve(&rhs).ok_or(Error::Singular)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        Ok((sol.rows(0, k).into_owned(), sol[k]))
    }

    /// Primal active-set method from a feasible `a`.
    fn solve(&self, mut a: DVector<f64>, tol: f64) -> Result<(DVector<f64>, f64)> {
        let n = a.len();
        let mut free: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
        let mut optimal: Option<(DVector<f64>, f64)> = None;
        let mut added = None;
        for _ in 0..(50 + 10 * n) {
            let (z, m) = self.eqp(&free)?;
            if z.iter().all(|&v| v > 0.0) {
                a.fill(0.0);
                for (p, &i) in free.iter().enumerate() {
                    a[i] = z[p];
                }
                let lam = &self.g * &a - &self.b - &self.c * m;
                let cand = (0..n)
                    .filter(|i| !free.contains(i))
                    .min_by(|&i, &j| lam[i].total_cmp(&lam[j]));
                match cand {
                    Some(i) if lam[i] < -tol => {
                        optimal = Some((a.clone(), m));
                        added = Some(i);
                        free.push(i);
                        free.sort_unstable();
                    }
                    _ => return Ok((a, m)),
                }
            } else {
                let mut alpha = 1.0f64;
                let mut block = None;
                for (p, &i) in free.iter().enumerate() {
                    if z[p] <= 0.0 {
                        let s = a[i] / (a[i] - z[p]);
                        if s < alpha {
                            alpha = s;
                            block = Some(i);
                        }
                    }
                }
                // degenerate: the column just added cannot enter (near-duplicate
                // of a free one), so the previous iterate is optimal to rounding
                if alpha <= 0.0 && block.is_some() && block == added {
                    if let Some(prev) = optimal {
                        return Ok(prev);
                    }
                }
                for (p, &i) in free.iter().enumerate() {
                    a[i] += alpha * (z[p] - a[i]);
                }
                if let Some(i) = block {
                    a[i] = 0.0;
                }
                free.retain(|&i| a[i] > 0.0);
                if free.is_empty() {
                    return Err(Error::Singular);
                }
            }
        }
        Err(Error::Singular)
    }
}

struct Work<'a> {
    f0: &'a F0,
    x0: f64,
    r: f64,
    norm_sq: f64,
    opts: LocalOptions,
    ts: Vec<f64>,
    a: Vec<f64>,
    m: f64,
    rule: (Vec<f64>, Vec<f64>),
}

impl Work<'_> {
    fn state_measure(&self) -> CmfMeasure {
        CmfMeasure::new(self.ts.iter().copied().zip(self.a.iter().copied()).filter(|p| p.1 > 0.0))
            .unwrap_or_else(|_| CmfMeasure::zero())
    }

    fn c_hat_deriv(&self, k: u32, t: f64) -> f64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let fs: f64 = self.ts.iter().zip(&self.a).map(|(tj, aj)| aj * moment(k, t + tj)).sum();
        sign * fs - self.f0.laplace(k, t) - self.m * (-self.x0).powi(k as i32) * (-self.x0 * t).exp()
    }

    /// Re-solve weights on `ts`, starting from the current weights rescaled to
    /// satisfy the constraint. Returns the objective.
    fn resolve(&mut self) -> Result<f64> {
        let qp = Qp::new(self.f0, self.x0, self.r, &self.ts);
        let mut a0 = DVector::from_vec(self.a.clone());
        let ca = qp.c.dot(&a0);
        if !(ca > 0.0) {
            // fall back to the single atom with the largest e^{-x₀t}
            a0.fill(0.0);
            let j = (0..self.ts.len()).min_by(|&i, &j| self.ts[i].total_cmp(&self.ts[j])).unwrap();
            a0[j] = self.r / qp.c[j];
        } else {
            a0 *= self.r / ca;
        }
        let (a, m) = qp.solve(a0, 1e-15 * self.norm_sq)?;
        self.a = a.iter().copied().collect();
        self.m = m;
        Ok(qp.objective(&a))
    }

    fn prune(&mut self) {
        let total: f64 = self.a.iter().sum();
        let keep: Vec<bool> = self.a.iter().map(|&a| a > self.opts.prune * total).collect();
        let mut i = 0;
        self.ts.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.a.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }

    fn merge(&mut self) {
        let mut pairs: Vec<(f64, f64)> = self.ts.iter().copied().zip(self.a.iter().copied()).collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (t, a) in pairs {
            match out.last_mut() {
                Some(last) if (t - last.0).abs() < self.opts.merge * (1.0 + t) => {
                    let w = last.1 + a;
                    last.0 = if w > 0.0 { (last.0 * last.1 + t * a) / w } else { last.0 };
                    last.1 = w;
                }
                _ => out.push((t, a)),
            }
        }
        self.ts = out.iter().map(|p| p.0).collect();
        self.a = out.iter().map(|p| p.1).collect();
    }

    /// Newton on the full optimality system of the current support:
    /// `Ĉ(t_j) = 0` for all atoms, `Ĉ′(t_j) = 0` for atoms with `t_j > 0`, and
    /// the constraint, in the unknowns `(a, t_{interior}, m)`. Returns `None`
    /// unless it converges to positive weights and nonnegative positions.
    fn kkt_newton(&self) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let n = self.ts.len();
        let mut ts = self.ts.clone();
        let mut a = self.a.clone();
        let mut m = self.m;
        let x0 = self.x0;
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let int: Vec<usize> = (0..n).filter(|&j| ts[j] > 0.0).collect();
            let k = int.len();
            let dim = n + k + 1;
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            let mut f = DVector::<f64>::zeros(dim);
            let e: Vec<f64> = ts.iter().map(|&t| (-x0 * t).exp()).collect();
            let chat = |kd: u32, t: f64| -> f64 {
                let sign = if kd % 2 == 0 { 1.0 } else { -1.0 };
                let fs: f64 = ts.iter().zip(&a).map(|(tj, aj)| aj * moment(kd, t + tj)).sum();
                sign * fs - self.f0.laplace(kd, t) - m * (-x0).powi(kd as i32) * (-x0 * t).exp()
            };
            // rows 0..n: Ĉ(t_j); rows n..n+k: Ĉ′(t_j), j interior; last row: constraint
            // cols 0..n: a_i; cols n..n+k: t_i, i interior; last col: m
            for j in 0..n {
                f[j] = chat(0, ts[j]);
                for i in 0..n {
                    jac[(j, i)] = gram(ts[j] + ts[i]);
                }
                for (p, &i) in int.iter().enumerate() {
                    let mut v = -a[i] * moment(1, ts[j] + ts[i]);
                    if i == j {
                        v += chat(1, ts[j]);
                    }
                    jac[(j, n + p)] = v;
                }
                jac[(j, dim - 1)] = -e[j];
            }
            for (q, &j) in int.iter().enumerate() {
                let row = n + q;
                f[row] = chat(1, ts[j]);
                for i in 0..n {
                    jac[(row, i)] = -moment(1, ts[j] + ts[i]);
                }
                for (p, &i) in int.iter().enumerate() {
                    let mut v = a[i] * moment(2, ts[j] + ts[i]);
                    if i == j {
                        v += chat(2, ts[j]);
                    }
                    jac[(row, n + p)] = v;
                }
                jac[(row, dim - 1)] = x0 * e[j];
            }
            f[dim - 1] = a.iter().zip(&e).map(|(a, e)| a * e).sum::<f64>() - self.r;
            for i in 0..n {
                jac[(dim - 1, i)] = e[i];
            }
            for (p, &i) in int.iter().enumerate() {
                jac[(dim - 1, n + p)] = -x0 * a[i] * e[i];
            }
            // every equation satisfied to rounding of its O(‖f₀‖) terms
            let f_tol = 1e-14 * (1.0 + a.iter().map(|v| v.abs()).sum::<f64>());
            if last.is_finite() && f.amax() <= f_tol {
                return a.iter().all(|&v| v > 0.0).then_some((ts, a, m));
            }
            let step = jac.lu().solve(&(-&f))?;
            let mut scale = 1.0f64;
            for (p, &i) in int.iter().enumerate() {
                let cap = 0.5 * ts[i].max(0.05);
                if step[n + p].abs() * scale > cap {
                    scale = cap / step[n + p].abs();
                }
            }
            let mut biggest = 0.0f64;
            for i in 0..n {
                a[i] += scale * step[i];
                biggest = biggest.max((scale * step[i]).abs() / a[i].abs().max(1e-300));
            }
            for (p, &i) in int.iter().enumerate() {
                ts[i] += scale * step[n + p];
                biggest = biggest.max((scale * step[n + p]).abs() / (1.0 + ts[i]));
            }
            m += scale * step[dim - 1];
            if a.iter().chain(&ts).any(|v| !v.is_finite()) || ts.iter().any(|&t| t < 0.0) {
                return None;
            }
            // full steps that stop shrinking have reached the rounding floor
            let stalled = biggest < 1e-9 && biggest > 0.5 * last;
            if scale == 1.0 && (biggest < 1e-14 || stalled) {
                return a.iter().all(|&v| v > 0.0).then_some((ts, a, m));
            }
            last = biggest;
        }
        None
    }

    /// Candidate supports: the current one with atoms within a relative
    /// distance `1e-2` merged, and that support without its lightest atom.
    /// Each gets fresh weights and [`Self::kkt_newton`]; the best converged
    /// candidate replaces the current support unless it raises the residual.
    fn polish(&mut self) {
        let saved = (self.ts.clone(), self.a.clone(), self.m);
        let base = self.residual();
        let merge = self.opts.merge;
        self.opts.merge = 1e-2;
        self.merge();
        self.opts.merge = merge;
        let clustered = (self.ts.clone(), self.a.clone());
        let mut best: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
        for drop_lightest in [false, true] {
            (self.ts, self.a) = clustered.clone();
            if drop_lightest {
                if self.ts.len() < 2 {
                    break;
                }
                let j = (0..self.a.len()).min_by(|&i, &j| self.a[i].total_cmp(&self.a[j])).unwrap();
                self.ts.remove(j);
                self.a.remove(j);
            }
            if self.resolve().is_err() {
                continue;
            }
            self.prune();
            if let Some((ts, a, m)) = self.kkt_newton() {
                (self.ts, self.a, self.m) = (ts, a, m);
                let res = self.residual();
                if best.as_ref().map_or(true, |b| res < b.0) {
                    best = Some((res, self.ts.clone(), self.a.clone(), self.m));
                }
            }
        }
        match best {
            Some((res, ts, a, m)) if res <= base * (1.0 + 1e-12) => {
                (self.ts, self.a, self.m) = (ts, a, m);
            }
            _ => (self.ts, self.a, self.m) = saved,
        }
    }

    /// Global minimum of `Ĉ` on the search grid, refined locally.
    fn global_min(&self, grid: &[f64]) -> (f64, f64) {
        let vals: Vec<f64> = grid.iter().map(|&t| self.c_hat_deriv(0, t)).collect();
        let i = (0..vals.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
        if i == 0 || i == grid.len() - 1 {
            return (grid[i], vals[i]);
        }
        let (mut t, _) = quad::golden_min(|t| self.c_hat_deriv(0, t), grid[i - 1], grid[i + 1], 1e-12);
        for _ in 0..20 {
            let d2 = self.c_hat_deriv(2, t);
            if !(d2 > 0.0) {
                break;
            }
            let nt = t - self.c_hat_deriv(1, t) / d2;
            if !(nt > grid[i - 1] && nt < grid[i + 1]) {
                break;
            }
            let done = (nt - t).abs() < 1e-15 * (1.0 + t);
            t = nt;
            if done {
                break;
            }
        }
        let v = self.c_hat_deriv(0, t);
        if v <= vals[i] {
            (t, v)
        } else {
            (grid[i], vals[i])
        }
    }

    /// `‖f_* − f₀‖₂` from pointwise differences; the Gram form
    /// `2·obj + ‖f₀‖₂²` cancels to rounding when `f_*` is close to `f₀`.
    fn residual(&self) -> f64 {
        let (x, w) = &self.rule;
        x.iter()
            .zip(w)
            .map(|(&x, w)| {
                let fs: f64 = self.ts.iter().zip(&self.a).map(|(t, a)| a * (-x * t).exp()).sum();
                w * (fs - self.f0.value(x)).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

pub fn solve_local(f0: &F0, x0: f64, delta: f64) -> Result<CapriniState> {
    solve_local_with(f0, x0, delta, &LocalOptions::default())
}

pub fn solve_local_with(f0: &F0, x0: f64, delta: f64, opts: &LocalOptions) -> Result<CapriniState> {
    if !(x0 >= 1.0) || !x0.is_finite() {
        return Err(domain(format!("x0 = {x0}"), "x0 >= 1"));
    }
    let v0 = f0.value(x0);
    let r = v0 + delta;
    if !(r > 0.0) {
        return Err(Error::Infeasible { delta, min: -v0 });
    }
    let norm_sq = f0.norm_sq();
    let base = CapriniState {
        f0: f0.clone(),
        x0,
        delta,
        f0_at_x0: v0,
        f0_norm_sq: norm_sq,
        ..CapriniState::default()
    };
    if delta == 0.0 {
        if let Some(m) = f0.atoms() {
            return Ok(CapriniState {
                support: m.clone(),
                history: vec![0.0],
                ..base
            });
        }
    }

    let t_max = opts.t_max_for(x0);
    let grid = search_grid(opts.search_points, t_max);
    // best single atom a e^{-xt}, a = r e^{x₀t}
    let start = grid
        .iter()
        .filter_map(|&t| {
            let a = r * (x0 * t).exp();
            let obj = 0.5 * a * a * gram(2.0 * t) - a * f0.laplace(0, t);
            obj.is_finite().then_some((t, obj))
        })
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .map(|p| p.0)
        .unwrap_or(0.0);
    let mut w = Work {
        f0,
        x0,
        r,
        norm_sq,
        opts: *opts,
        ts: vec![start],
        a: vec![r * (x0 * start).exp()],
        m: 0.0,
        rule: graded_unit_rule(),
    };
    w.resolve()?;
    let mut history = Vec::new();
    let lf0 = f0.laplace(0, 0.0).abs();
    let mut cert = (0.0, 0.0);
    let mut iterations = opts.max_outer;
    for it in 0..opts.max_outer {
        w.polish();
        let res = w.residual();
        history.push(res);
        cert = w.global_min(&grid);
        // Ĉ is bounded by ‖f_* − f₀‖₂, so the tolerance scales with it; the
        // floor is the rounding level of the sums that make up Ĉ
        let floor = 32.0 * f64::EPSILON * (lf0 + w.a.iter().sum::<f64>() + w.m.abs());
        if cert.1 >= -(opts.tol_cert * res + floor) {
            let support = w.state_measure();
            return Ok(CapriniState {
                support,
                m: w.m,
                cert_min: cert.1,
                cert_argmin: cert.0,
                residual_l2: res,
                iterations: it + 1,
                history,
                ..base
            });
        }
        if history.len() > 20 && history[history.len() - 21] <= res * (1.0 + 1e-14) {
            iterations = it + 1;
            break;
        }
        w.ts.push(cert.0);
        w.a.push(0.0);
        w.merge();
        w.resolve()?;
        w.prune();
        w.resolve()?;
    }
    let state = CapriniState {
        support: w.state_measure(),
        m: w.m,
        cert_min: cert.1,
        cert_argmin: cert.0,
        residual_l2: w.residual(),
        iterations,
        history,
        ..base
    };
    Err(Error::NotConverged {
        iterations,
        cert_min: cert.1,
        state: Box::new(state),
    })
}

/// Upper and lower envelopes `M_ϵ = f₀(x₀) + δ₊`, `m_ϵ = f₀(x₀) + δ₋` with
/// `‖f_*(δ±) − f₀‖₂ = ϵ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSweep {
    pub eps: f64,
    pub x0: f64,
    pub upper: f64,
    pub lower: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub upper_state: CapriniState,
    pub lower_state: CapriniState,
}

pub fn sweep_epsilon(f0: &F0, x0: f64, eps: f64) -> Result<EpsSweep> {
    sweep_epsilon_with(f0, x0, eps, &LocalOptions::default())
}

pub fn sweep_epsilon_with(f0: &F0, x0: f64, eps: f64, opts: &LocalOptions) -> Result<EpsSweep> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!("eps = {eps}"), "eps > 0"));
    }
    let v0 = f0.value(x0);
    let resid = |d: f64| solve_local_with(f0, x0, d, opts).map(|s| s.residual_l2);
    let log_gap = |d: f64| -> f64 {
        match resid(d) {
            Ok(r) => r.ln() - eps.ln(),
            Err(_) => f64::NAN,
        }
    };

    // δ₊: bracket on ln δ by expansion
    let (mut lo, mut hi) = (eps.ln(), eps.ln());
    let mut tries = 0;
    while log_gap(lo.exp()) > 0.0 {
        lo -= 4f64.ln();
        tries += 1;
        if tries > 60 {
            return Err(Error::NoBracket {
                lo: lo.exp(),
                hi: hi.exp(),
                detail: "residual stays above eps for small delta".into(),
            });
        }
    }
    while !(log_gap(hi.exp()) > 0.0) {
        hi += 4f64.ln();
        tries += 1;
        if tries > 60 {
            return Err(Error::NoBracket {
                lo: lo.exp(),
                hi: hi.exp(),
                detail: "residual never reaches eps for positive delta".into(),
            });
        }
    }
    let lp = quad::bracketed_root(|l| log_gap(l.exp()), lo, hi, 1e-13)?;
    let delta_plus = lp.exp();
    let upper_state = solve_local_with(f0, x0, delta_plus, opts)?;

    // δ₋ = −f₀(x₀)θ, θ ∈ (0,1)
    let theta_top = 1.0 - 1e-12;
    let sup = resid(-v0 * theta_top)?;
    if sup <= eps {
        return Err(Error::Unreachable { eps, sup });
    }
    let gm = |th: f64| log_gap(-v0 * th);
    let mut th_lo = (eps / v0.max(f64::MIN_POSITIVE)).min(0.5);
    while gm(th_lo) > 0.0 {
        th_lo *= 0.25;
    }
    let th = quad::bracketed_root(gm, th_lo, theta_top, 1e-14)?;
    let delta_minus = -v0 * th;
    let lower_state = solve_local_with(f0, x0, delta_minus, opts)?;
    Ok(EpsSweep {
        eps,
        x0,
        upper: v0 + delta_plus,
        lower: v0 + delta_minus,
        delta_plus,
        delta_minus,
        upper_state,
        lower_state,
    })
}

// Gauss-Legendre on geometric panels of [0,1], resolving e^{-xt} for large t.
pub(crate) fn graded_unit_rule() -> (Vec<f64>, Vec<f64>) {
    let mut edges = vec![0.0];
    for k in (0..=10).rev() {
        edges.push(0.25f64.powi(k));
    }
    let mut x = Vec::new();
    let mut w = Vec::new();
    for p in edges.windows(2) {
        let (xn, wn) = quad::gauss_legendre(24, p[0], p[1]);
        x.extend(xn);
        w.extend(wn);
    }
    (x, w)
}

/// Closed-form optimum for `f₀ = e^{-x}`, written in the perturbation
/// variables `s = τ − 1` so that small δ loses no digits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpOptimum {
    pub x0: f64,
    pub delta: f64,
    pub tau: f64,
    /// Weight at `t = 0` (zero for δ < 0).
    pub a: f64,
    /// Weight at `t = τ`.
    pub b: f64,
    pub m: f64,
    pub residual_l2: f64,
}

struct PertRule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl PertRule {
    fn new() -> Self {
        let (x, w) = graded_unit_rule();
        Self { x, w }
    }

    // ∫ x^k e^{-x(t+1)} expm1(−xs) dx
    fn e(&self, k: i32, t: f64, s: f64) -> f64 {
        self.x
            .iter()
            .zip(&self.w)
            .map(|(&x, w)| w * x.powi(k) * (-x * (t + 1.0)).exp() * (-x * s).exp_m1())
            .sum()
    }

    fn norm(&self, d: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, w)| w * d(x).powi(2)).sum::<f64>().sqrt()
    }
}

/// Solve the optimality system for `f₀ = e^{-x}` exactly.
///
/// For δ > 0, `f_* = a + b e^{-xτ}` and `Ĉ(0) = Ĉ(τ) = Ĉ′(τ) = 0` plus the
/// constraint; `(a, b, m)` enter linearly, leaving a scalar equation in τ.
/// For δ < 0, `f_* = b e^{-xτ}` with `b` fixed by the constraint and τ a root
/// of `∫(x₀ − x) e^{-xτ}(f_* − f₀) dx = 0`.
pub fn exp_optimum(x0: f64, delta: f64) -> Result<ExpOptimum> {
    if !(x0 >= 1.0) || !x0.is_finite() {
        return Err(domain(format!("x0 = {x0}"), "x0 >= 1"));
    }
    let v0 = (-x0).exp();
    if !(delta > -v0) || delta == 0.0 || !delta.is_finite() {
        return Err(Error::Infeasible { delta, min: -v0 });
    }
    let rule = PertRule::new();
    let s_max = 200.0;
    if delta > 0.0 {
        let lin = |s: f64| -> Option<(f64, f64, f64)> {
            let tau = 1.0 + s;
            let e = (-x0 * tau).exp();
            let m = DMatrix::from_row_slice(3, 3, &[1.0, gram(tau), -1.0, gram(tau), gram(2.0 * tau), -e, 1.0, e, 0.0]);
            let rhs = DVector::from_vec(vec![
                -rule.e(0, 0.0, s),
                -rule.e(0, tau, s),
                delta - v0 * (-x0 * s).exp_m1(),
            ]);
            let z = m.lu().solve(&rhs)?;
            Some((z[0], z[1], z[2]))
        };
        let h = |s: f64| -> f64 {
            let tau = 1.0 + s;
            match lin(s) {
                Some((a, beta, m)) => {
                    -a * moment(1, tau) - beta * moment(1, 2.0 * tau) - rule.e(1, tau, s)
                        + m * x0 * (-x0 * tau).exp()
                }
                None => f64::NAN,
            }
        };
        let s = scan_root(h, s_max)?;
        let tau = 1.0 + s;
        let (a, beta, m) = lin(s).ok_or(Error::Singular)?;
        let residual_l2 = rule.norm(|x| a + beta * (-x * tau).exp() + (-x).exp() * (-x * s).exp_m1());
        Ok(ExpOptimum {
            x0,
            delta,
            tau,
            a,
            b: 1.0 + beta,
            m,
            residual_l2,
        })
    } else {
        let lp = (delta / v0).ln_1p();
        let bm1 = |s: f64| (x0 * s + lp).exp_m1();
        let h = |s: f64| -> f64 {
            let tau = 1.0 + s;
            bm1(s) * (x0 * gram(2.0 * tau) - moment(1, 2.0 * tau)) + x0 * rule.e(0, tau, s) - rule.e(1, tau, s)
        };
        let s = scan_root(h, s_max)?;
        let tau = 1.0 + s;
        let c_tau = bm1(s) * gram(2.0 * tau) + rule.e(0, tau, s);
        let residual_l2 = rule.norm(|x| bm1(s) * (-x * tau).exp() + (-x).exp() * (-x * s).exp_m1());
        Ok(ExpOptimum {
            x0,
            delta,
            tau,
            a: 0.0,
            b: 1.0 + bm1(s),
            m: c_tau * (x0 * tau).exp(),
            residual_l2,
        })
    }
}

// First sign change of h in s = τ − 1 ∈ (0, s_max], on a log scan; the root
// is refined to relative precision since s → 0 with δ.
fn scan_root(h: impl Fn(f64) -> f64, s_max: f64) -> Result<f64> {
    let n = 600;
    let (l0, l1) = (-14.0f64, s_max.log10());
    let pts: Vec<f64> = (0..=n).map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / n as f64)).collect();
    let mut prev = (pts[0], h(pts[0]));
    for &s in &pts[1..] {
        let v = h(s);
        if prev.1.is_finite() && v.is_finite() && prev.1.signum() != v.signum() {
            return quad::bracketed_root(&h, prev.0, s, 1e-14 * prev.0);
        }
        prev = (s, v);
    }
    let trace: Vec<String> = pts
        .iter()
        .step_by(75)
        .map(|&s| format!("h(tau = 1 + {s:.3e}) = {:.3e}", h(s)))
        .collect();
    Err(Error::NoBracket {
        lo: 1.0 + pts[0],
        hi: 1.0 + s_max,
        detail: trace.join(", "),
    })
}

/// [`exp_optimum`] packaged as a [`CapriniState`].
pub fn exp_closed_form(x0: f64, delta: f64) -> Result<CapriniState> {
    let opt = exp_optimum(x0, delta)?;
    let atoms: Vec<(f64, f64)> = if delta > 0.0 {
        vec![(0.0, opt.a), (opt.tau, opt.b)]
    } else {
        vec![(opt.tau, opt.b)]
    };
    let f0 = F0::exponential();
    let mut st = CapriniState {
        x0,
        delta,
        f0_at_x0: (-x0).exp(),
        f0_norm_sq: f0.norm_sq(),
        f0,
        support: CmfMeasure::new(atoms)?,
        m: opt.m,
        residual_l2: opt.residual_l2,
        history: vec![opt.residual_l2],
        ..CapriniState::default()
    };
    let chk = st.check_certificate(LocalOptions::default().search_points, LocalOptions::default().t_max_for(x0));
    st.cert_min = chk.grid_min;
    st.cert_argmin = chk.grid_argmin;
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ESlopes {
    pub x0: f64,
    pub e_plus: f64,
    pub e_minus: f64,
}

/// Slopes `E±(x₀) = lim |δ|/‖f_*(δ) − f₀‖₂` as δ → 0±, from the closed form at
/// `δ = ±h, ±2h`, `h = 10⁻⁶`, with one Richardson step. On the negative side
/// the step is scaled by `e^{-x₀}` to stay inside `(−e^{-x₀}, 0)`.
pub fn e_slopes(x0: f64) -> Result<ESlopes> {
    let h = 1e-6;
    let e = |d: f64| exp_optimum(x0, d).map(|o| d.abs() / o.residual_l2);
    let hm = h * (-x0).exp();
    Ok(ESlopes {
        x0,
        e_plus: 2.0 * e(h)? - e(2.0 * h)?,
        e_minus: 2.0 * e(-hm)? - e(-2.0 * hm)?,
    })
}

/// `E₋(1) = 2√((e²−1)/(e⁴−6e²+1))`.
pub fn e_minus_unit_exact() -> f64 {
    let e2 = std::f64::consts::E.powi(2);
    2.0 * ((e2 - 1.0) / (e2 * e2 - 6.0 * e2 + 1.0)).sqrt()
}

/// `lim_{x₀→∞} E₊(x₀) = √(−(e²+2e−1)/(3e²−10e+5))`.
pub fn e_plus_limit() -> f64 {
    let e = std::f64::consts::E;
    (-(e * e + 2.0 * e - 1.0) / (3.0 * e * e - 10.0 * e + 5.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn caprini_function_of_shifted_state() {
        let f0 = F0::exponential();
        let st = CapriniState {
            support: CmfMeasure::new([(1.0, 1.0), (1.0, 1.0)]).unwrap(),
            f0,
            x0: 2.0,
            ..CapriniState::default()
        };
        assert_relative_eq!(st.caprini_c(0.0), 1.0 - (-1f64).exp(), max_relative = 1e-14);
        let same = CapriniState {
            support: CmfMeasure::exponential(),
            ..st
        };
        assert_eq!(same.caprini_c(0.7), 0.0);
    }

    #[test]
    fn zero_delta_is_identity() {
        let st = solve_local(&F0::exponential(), 2.0, 0.0).unwrap();
        assert_eq!(st.residual_l2, 0.0);
        assert_eq!(st.caprini_c(0.3), 0.0);
    }

    #[test]
    fn infeasible_delta() {
        let r = solve_local(&F0::exponential(), 2.0, -0.2);
        assert!(matches!(r, Err(Error::Infeasible { .. })));
    }

    #[test]
    fn positive_delta_support_shape() {
        let st = solve_local(&F0::exponential(), 2.0, 1e-3).unwrap();
        let at = st.support.atoms();
        assert_eq!(at.len(), 2, "{at:?}");
        assert_eq!(at[0].t, 0.0);
        assert!(at[1].t > 1.0);
        assert!(st.constraint_residual().abs() <= 1e-10 * ((-2f64).exp() + 1e-3));
        assert!(st.check_certificate(10_000, 70.0).passed);
        assert!(st.caprini_c_hat(0.0).abs() < 1e-12);
    }

    #[test]
    fn negative_delta_single_atom() {
        let st = solve_local(&F0::exponential(), 2.0, -1e-3).unwrap();
        let at = st.support.atoms();
        assert_eq!(at.len(), 1, "{at:?}");
        assert!(at[0].t > 1.0);
        assert!(st.check_certificate(10_000, 70.0).passed);
    }

    #[test]
    fn closed_form_matches_iteration() {
        for d in [1e-3, -1e-3] {
            let it = solve_local(&F0::exponential(), 2.0, d).unwrap();
            let cf = exp_optimum(2.0, d).unwrap();
            let last = it.support.atoms().last().unwrap();
            assert_relative_eq!(last.t, cf.tau, max_relative = 1e-6);
            assert_relative_eq!(last.a, cf.b, max_relative = 1e-6);
            if d > 0.0 {
                assert_relative_eq!(it.support.atoms()[0].a, cf.a, max_relative = 1e-6);
            }
            assert_relative_eq!(it.residual_l2, cf.residual_l2, max_relative = 1e-6);
        }
    }

    #[test]
    fn closed_form_certificate() {
        for d in [1e-2, 1e-5, -1e-2, -1e-5] {
            let st = exp_closed_form(2.0, d).unwrap();
            let chk = st.check_certificate(10_000, 70.0);
            assert!(chk.passed, "{d}: {chk:?}");
        }
    }

    #[test]
    fn slopes_at_one() {
        let s = e_slopes(1.0).unwrap();
        assert!((s.e_plus - 2.67788263).abs() < 1e-4, "{}", s.e_plus);
        assert!((s.e_minus - e_minus_unit_exact()).abs() < 1e-3, "{}", s.e_minus);
    }

    #[test]
    fn black_box_reference() {
        let lam: ScalarFn = Arc::new(|t: f64| gram(1.0 + t));
        let f0 = F0::BlackBox {
            value: Arc::new(|x: f64| (-x).exp()),
            laplace: lam,
            norm_sq: CmfMeasure::exponential().l2_norm_sq(),
        };
        let bb = solve_local(&f0, 2.0, 1e-3).unwrap();
        let at = solve_local(&F0::exponential(), 2.0, 1e-3).unwrap();
        assert_relative_eq!(bb.residual_l2, at.residual_l2, max_relative = 1e-6);
    }
}
