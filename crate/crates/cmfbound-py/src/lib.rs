//! Python bindings. Results come back as plain dicts and lists.

use cmfbound::acceptance::{self, CheckResult, DEFAULT_SEED};
use cmfbound::cmf::CmfMeasure;
use cmfbound::local_caprini::{self as local, CapriniState, F0};
use cmfbound::oracle;
use cmfbound::phi_solver::{self, PhiSolution};
use cmfbound::special_fn;
use cmfbound::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain { .. } | Error::InvalidArgument(_) | Error::Infeasible { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn f0_from(atoms: Option<Vec<(f64, f64)>>) -> PyResult<F0> {
    match atoms {
        None => Ok(F0::exponential()),
        Some(a) => Ok(F0::Atoms(CmfMeasure::new(a).map_err(to_py)?)),
    }
}

fn phi_dict<'py>(py: Python<'py>, s: &PhiSolution) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x0", s.x0)?;
    d.set_item("eps", s.eps)?;
    d.set_item("veps", s.veps)?;
    d.set_item("delta_star", s.delta_star)?;
    d.set_item("psi_at_x0", s.psi_at_x0)?;
    d.set_item("norm_l2", s.norm_l2)?;
    d.set_item("norm_hardy", s.norm_hardy)?;
    d.set_item("mu_max", s.mu_max)?;
    d.set_item("pythagoras_residual", s.pythagoras_residual())?;
    Ok(d)
}

fn state_dict<'py>(py: Python<'py>, s: &CapriniState) -> PyResult<Bound<'py, PyDict>> {
    let chk = s.check_certificate(10_000, local::LocalOptions::default().t_max_for(s.x0));
    let d = PyDict::new(py);
    d.set_item("x0", s.x0)?;
    d.set_item("delta", s.delta)?;
    d.set_item("value_at_x0", s.f0_at_x0 + s.delta)?;
    let atoms: Vec<(f64, f64)> = s.support.atoms().iter().map(|a| (a.t, a.a)).collect();
    d.set_item("atoms", atoms)?;
    d.set_item("m", s.m)?;
    d.set_item("residual_l2", s.residual_l2)?;
    d.set_item("iterations", s.iterations)?;
    d.set_item("certificate_min", chk.grid_min)?;
    d.set_item("certificate_passed", chk.passed)?;
    Ok(d)
}

fn check_dict<'py>(py: Python<'py>, r: &CheckResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("id", r.id)?;
    d.set_item("slug", &r.slug)?;
    d.set_item("title", &r.title)?;
    d.set_item("passed", r.passed)?;
    d.set_item("detail", &r.detail)?;
    d.set_item("elapsed_ms", r.elapsed_ms)?;
    Ok(d)
}

/// Exponent γ*(x₀) of the power law Δ* ~ C ϵ^γ*.
#[pyfunction]
fn gamma_star(x0: f64) -> PyResult<f64> {
    special_fn::gamma_star(x0).map_err(to_py)
}

#[pyfunction]
fn eigenvalue_nu(mu: f64) -> f64 {
    special_fn::eigenvalue_nu(mu)
}

/// Real eigenfunction u(x; μ), x > 0.
#[pyfunction]
fn eigfun_u(x: f64, mu: f64) -> PyResult<f64> {
    if !(x > 0.0 && mu >= 0.0) {
        return Err(PyValueError::new_err("need x > 0 and mu >= 0"));
    }
    Ok(special_fn::u_real(x, mu))
}

/// Δ*(ϵ) at x₀ and the matching φ-problem solution.
#[pyfunction]
fn delta_star<'py>(py: Python<'py>, x0: f64, eps: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = py.detach(|| phi_solver::delta_star_at(x0, eps)).map_err(to_py)?;
    phi_dict(py, &p.solution)
}

/// φ-problem at regularisation ε = `veps`.
#[pyfunction]
fn solve_psi<'py>(py: Python<'py>, x0: f64, veps: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = py.detach(|| phi_solver::solve_psi(x0, veps)).map_err(to_py)?;
    phi_dict(py, &s)
}

/// Least-squares slope of log Δ* against log ϵ.
#[pyfunction]
fn powerlaw_fit<'py>(py: Python<'py>, x0: f64, eps: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = py.detach(|| phi_solver::powerlaw_fit(x0, &eps)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("slope", fit.slope)?;
    d.set_item("intercept", fit.intercept)?;
    d.set_item("gamma_star", fit.gamma_star)?;
    d.set_item("delta_star", fit.points.iter().map(|p| p.delta_star).collect::<Vec<_>>())?;
    d.set_item("ratio", fit.points.iter().map(|p| p.ratio).collect::<Vec<_>>())?;
    Ok(d)
}

/// Local problem at f(x₀) = f₀(x₀) + δ; `f0` is a list of (t, a) atoms, default e^{-x}.
#[pyfunction]
#[pyo3(signature = (x0, delta, f0=None))]
fn solve_local<'py>(py: Python<'py>, x0: f64, delta: f64, f0: Option<Vec<(f64, f64)>>) -> PyResult<Bound<'py, PyDict>> {
    let f0 = f0_from(f0)?;
    let s = py.detach(|| local::solve_local(&f0, x0, delta)).map_err(to_py)?;
    state_dict(py, &s)
}

/// Two-sided envelope at L² radius ϵ.
#[pyfunction]
#[pyo3(signature = (x0, eps, f0=None))]
fn envelope<'py>(py: Python<'py>, x0: f64, eps: f64, f0: Option<Vec<(f64, f64)>>) -> PyResult<Bound<'py, PyDict>> {
    let f0 = f0_from(f0)?;
    let sw = py.detach(|| local::sweep_epsilon(&f0, x0, eps)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("eps", sw.eps)?;
    d.set_item("upper", sw.upper)?;
    d.set_item("lower", sw.lower)?;
    d.set_item("upper_state", state_dict(py, &sw.upper_state)?)?;
    d.set_item("lower_state", state_dict(py, &sw.lower_state)?)?;
    Ok(d)
}

/// Slopes (E+, E-) of the envelope around e^{-x}.
#[pyfunction]
fn e_slopes(x0: f64) -> PyResult<(f64, f64)> {
    let s = local::e_slopes(x0).map_err(to_py)?;
    Ok((s.e_plus, s.e_minus))
}

/// Dense Nyström solve of the φ-problem.
#[pyfunction]
#[pyo3(signature = (x0, eps2, n=400))]
fn nystrom<'py>(py: Python<'py>, x0: f64, eps2: f64, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let s = py.detach(|| oracle::nystrom_solve(x0, eps2, n)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("psi_at_x0", s.psi_at_x0)?;
    d.set_item("norm_l2", s.norm_l2)?;
    d.set_item("norm_hardy", s.norm_hardy)?;
    d.set_item("eps", s.eps())?;
    d.set_item("delta_star", s.delta_star())?;
    d.set_item("pythagoras_residual", s.pythagoras_residual())?;
    Ok(d)
}

/// min over `p_scan` of the Hardy-space dual bound.
#[pyfunction]
fn dual_upper_bound(py: Python<'_>, x0: f64, eps: f64, p_scan: Vec<f64>) -> PyResult<f64> {
    py.detach(|| oracle::dual_upper_bound(x0, eps, &p_scan)).map_err(to_py)
}

/// Rows (K, L² discrepancy, quadrature check, gap at x = c).
#[pyfunction]
#[pyo3(signature = (eps, k, c=0.0))]
fn left_demo(eps: f64, k: Vec<f64>, c: f64) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let rows = oracle::left_unbounded_demo(eps, &k, c).map_err(to_py)?;
    Ok(rows.iter().map(|r| (r.k, r.l2_discrepancy, r.l2_quadrature, r.gap)).collect())
}

/// Acceptance checks; all of them, or one by slug or number.
#[pyfunction]
#[pyo3(signature = (only=None, seed=DEFAULT_SEED))]
fn verify<'py>(py: Python<'py>, only: Option<String>, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let results = py
        .detach(|| match &only {
            Some(k) => acceptance::run_check(k, seed).map(|r| vec![r]),
            None => Ok(acceptance::run_all(seed)),
        })
        .map_err(to_py)?;
    results.iter().map(|r| check_dict(py, r)).collect()
}

#[pymodule]
fn cmfbound_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(gamma_star, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalue_nu, m)?)?;
    m.add_function(wrap_pyfunction!(eigfun_u, m)?)?;
    m.add_function(wrap_pyfunction!(delta_star, m)?)?;
    m.add_function(wrap_pyfunction!(solve_psi, m)?)?;
    m.add_function(wrap_pyfunction!(powerlaw_fit, m)?)?;
    m.add_function(wrap_pyfunction!(solve_local, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(e_slopes, m)?)?;
    m.add_function(wrap_pyfunction!(nystrom, m)?)?;
    m.add_function(wrap_pyfunction!(dual_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(left_demo, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("DEFAULT_SEED", DEFAULT_SEED)?;
    Ok(())
}
