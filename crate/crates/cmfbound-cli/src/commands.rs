use std::io::Write;

use anyhow::{bail, Context, Result};
use cmfbound::acceptance::{find_check, run_all, run_check, CheckResult};
use cmfbound::cmf::CmfMeasure;
use cmfbound::local_caprini::{
    e_slopes, search_grid, solve_local_with, sweep_epsilon_with, CapriniState, CertificateCheck, F0,
};
use cmfbound::oracle::{dual_bound_scan, grid_local_solve, left_unbounded_demo, log_t_grid, nystrom_solve};
use cmfbound::phi_solver::{powerlaw_fit_with, PhiSolver};
use cmfbound::special_fn::{eigenvalue_nu, eigfun_u_with, gamma_star};
use cmfbound::operator_k::eigen_residual;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Command, Format, RunConfig};
use crate::output::{g12, sink, write_json, Table};

/// A problem with the request itself (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Runs the configured command; `Ok(false)` means verification failed.
pub fn run(cfg: &RunConfig) -> Result<bool> {
    let mut out = sink(cfg.output.as_deref())?;
    match &cfg.command {
        Command::Powerlaw { x0, eps_decades, per_decade } => {
            powerlaw(cfg, *x0, eps_decades.lo, eps_decades.hi, *per_decade, &mut out)?
        }
        Command::DeltaStar { x0, eps, veps } => delta_star(cfg, *x0, eps, veps, &mut out)?,
        Command::Local { f0, x0, eps, delta, slopes, trace_points, trace } => {
            local(cfg, f0, *x0, *eps, *delta, *slopes, *trace_points, trace.as_deref(), &mut out)?
        }
        Command::Eig { mu, x, n_probe } => eig(cfg, mu, x, *n_probe, &mut out)?,
        Command::OracleCompare { x0, veps, delta } => oracle_compare(cfg, x0, veps, delta, &mut out)?,
        Command::DemoLeft { eps, k, c } => demo_left(cfg, *eps, k, *c, &mut out)?,
        Command::Verify { only, json } => return verify(cfg, only.as_deref(), *json, &mut out),
    }
    Ok(true)
}

fn emit(cfg: &RunConfig, table: &Table, json: &impl Serialize, out: &mut dyn Write) -> Result<()> {
    match cfg.format() {
        Format::Csv => table.write(out),
        Format::Json => write_json(out, json),
    }
}

fn powerlaw(cfg: &RunConfig, x0: f64, lo: f64, hi: f64, per_decade: usize, out: &mut dyn Write) -> Result<()> {
    if hi > 1.0 {
        return Err(usage(format!("eps range must lie in (0, 1], got upper end {hi}")));
    }
    if per_decade == 0 {
        return Err(usage("--per-decade must be positive"));
    }
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    let eps: Vec<f64> = (0..=n).map(|k| lo * 10f64.powf(decades * k as f64 / n as f64)).collect();
    let solver = PhiSolver::new(x0, cfg.profile.phi)?;
    let fit = powerlaw_fit_with(&solver, &eps)?;
    let mut t = Table::new(&["eps", "veps", "delta_star", "asymptotic", "ratio", "local_slope"]);
    for p in &fit.points {
        t.push(vec![p.eps.into(), p.veps.into(), p.delta_star.into(), p.asymptotic_value.into(), p.ratio.into(), p.local_slope.into()]);
    }
    emit(cfg, &t, &fit, out)?;
    eprintln!(
        "x0 = {}: fitted slope {} vs gamma*(x0) = {} (difference {})",
        g12(x0),
        g12(fit.slope),
        g12(gamma_star(x0)?),
        g12(fit.slope - fit.gamma_star)
    );
    Ok(())
}

#[derive(Serialize)]
struct DeltaStarRow {
    x0: f64,
    eps: f64,
    veps: f64,
    delta_star: f64,
    psi_at_x0: f64,
    norm_l2: f64,
    norm_hardy: f64,
    pythagoras_residual: f64,
    mu_max: f64,
}

fn delta_star(cfg: &RunConfig, x0: f64, eps: &[f64], veps: &[f64], out: &mut dyn Write) -> Result<()> {
    if eps.is_empty() && veps.is_empty() {
        return Err(usage("give --eps and/or --veps values"));
    }
    let solver = PhiSolver::new(x0, cfg.profile.phi)?;
    let jobs: Vec<(bool, f64)> = eps.iter().map(|&e| (true, e)).chain(veps.iter().map(|&v| (false, v))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(by_eps, v)| {
            let s = if by_eps { solver.delta_star(v)?.solution } else { solver.solve(v)? };
            Ok(DeltaStarRow {
                x0,
                eps: s.eps,
                veps: s.veps,
                delta_star: s.delta_star,
                psi_at_x0: s.psi_at_x0,
                norm_l2: s.norm_l2,
                norm_hardy: s.norm_hardy,
                pythagoras_residual: s.pythagoras_residual(),
                mu_max: s.mu_max,
            })
        })
        .collect::<cmfbound::Result<Vec<_>>>()?;
    let mut t = Table::new(&["x0", "eps", "veps", "delta_star", "psi_at_x0", "norm_l2", "norm_hardy", "pythagoras_residual", "mu_max"]);
    for r in &rows {
        t.push(vec![
            r.x0.into(),
            r.eps.into(),
            r.veps.into(),
            r.delta_star.into(),
            r.psi_at_x0.into(),
            r.norm_l2.into(),
            r.norm_hardy.into(),
            r.pythagoras_residual.into(),
            r.mu_max.into(),
        ]);
    }
    emit(cfg, &t, &rows, out)
}

/// `exp` or `t:a,t:a,...`.
pub fn parse_f0(spec: &str) -> Result<F0> {
    if spec.trim() == "exp" {
        return Ok(F0::exponential());
    }
    let mut atoms = Vec::new();
    for part in spec.split(',') {
        let (t, a) = part
            .split_once(':')
            .ok_or_else(|| usage(format!("f0 atom '{part}' is not t:a")))?;
        let t: f64 = t.trim().parse().map_err(|_| usage(format!("bad atom location '{t}'")))?;
        let a: f64 = a.trim().parse().map_err(|_| usage(format!("bad atom weight '{a}'")))?;
        atoms.push((t, a));
    }
    let m = CmfMeasure::new(atoms).map_err(|e| usage(e.to_string()))?;
    Ok(F0::Atoms(m))
}

#[derive(Serialize)]
struct StateReport {
    branch: &'static str,
    delta: f64,
    value_at_x0: f64,
    atoms: Vec<(f64, f64)>,
    m: f64,
    residual_l2: f64,
    iterations: usize,
    certificate: CertificateCheck,
    /// Check-grid points with `Ĉ < −threshold`.
    violations: Vec<f64>,
}

fn report(branch: &'static str, s: &CapriniState, t_max: f64) -> StateReport {
    let chk = s.check_certificate(10_000, t_max);
    let grid = search_grid(10_000, t_max);
    let violations = grid.into_iter().filter(|&t| s.caprini_c_hat(t) < -chk.threshold).collect();
    StateReport {
        branch,
        delta: s.delta,
        value_at_x0: s.f0_at_x0 + s.delta,
        atoms: s.support.atoms().iter().map(|a| (a.t, a.a)).collect(),
        m: s.m,
        residual_l2: s.residual_l2,
        iterations: s.iterations,
        certificate: chk,
        violations,
    }
}

#[derive(Serialize)]
struct TraceRow {
    branch: &'static str,
    t: f64,
    c: f64,
    c_hat: f64,
}

#[derive(Serialize)]
struct LocalReport {
    x0: f64,
    f0_at_x0: f64,
    eps: Option<f64>,
    upper: Option<f64>,
    lower: Option<f64>,
    states: Vec<StateReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    trace: Vec<TraceRow>,
}

#[allow(clippy::too_many_arguments)]
fn local(
    cfg: &RunConfig,
    f0_spec: &str,
    x0: f64,
    eps: Option<f64>,
    delta: Option<f64>,
    slopes: bool,
    trace_points: usize,
    trace_path: Option<&std::path::Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let f0 = parse_f0(f0_spec)?;
    let opts = cfg.profile.local;
    if slopes {
        if f0_spec.trim() != "exp" {
            return Err(usage("--slopes is available for --f0 exp only"));
        }
        let s = e_slopes(x0)?;
        let mut t = Table::new(&["x0", "e_plus", "e_minus"]);
        t.push(vec![s.x0.into(), s.e_plus.into(), s.e_minus.into()]);
        return emit(cfg, &t, &s, out);
    }
    let t_max = opts.t_max_for(x0);
    let states: Vec<(&'static str, CapriniState)> = match (eps, delta) {
        (Some(e), None) => {
            let sw = sweep_epsilon_with(&f0, x0, e, &opts)?;
            vec![("upper", sw.upper_state), ("lower", sw.lower_state)]
        }
        (None, Some(d)) => vec![("delta", solve_local_with(&f0, x0, d, &opts)?)],
        _ => return Err(usage("give exactly one of --eps, --delta, --slopes")),
    };
    let ts = search_grid(trace_points.max(3), t_max);
    let trace: Vec<TraceRow> = states
        .iter()
        .flat_map(|(b, s)| {
            s.certificate_trace(&ts)
                .into_iter()
                .map(move |p| TraceRow { branch: b, t: p.t, c: p.c, c_hat: p.c_hat })
        })
        .collect();
    let mut table = Table::new(&["branch", "t", "c", "c_hat"]);
    for r in &trace {
        table.push(vec![r.branch.into(), r.t.into(), r.c.into(), r.c_hat.into()]);
    }
    if let Some(p) = trace_path {
        table.write(sink(Some(p))?).with_context(|| format!("writing {}", p.display()))?;
    }
    let f0_at_x0 = f0.value(x0);
    let rep = LocalReport {
        x0,
        f0_at_x0,
        eps,
        upper: eps.map(|_| states[0].1.f0_at_x0 + states[0].1.delta),
        lower: eps.map(|_| states[1].1.f0_at_x0 + states[1].1.delta),
        states: states.iter().map(|(b, s)| report(b, s, t_max)).collect(),
        trace: if trace_path.is_none() && cfg.format() == Format::Json { trace } else { Vec::new() },
    };
    for r in &rep.states {
        eprintln!(
            "{}: f(x0) = {}, residual {}, certificate min {} ({}), {} atoms",
            r.branch,
            g12(r.value_at_x0),
            g12(r.residual_l2),
            g12(r.certificate.grid_min),
            if r.certificate.passed { "pass" } else { "FAIL" },
            r.atoms.len()
        );
    }
    match cfg.format() {
        Format::Json => write_json(out, &rep),
        Format::Csv => table.write(out),
    }
}

#[derive(Serialize)]
struct EigRow {
    mu: f64,
    nu: f64,
    x: f64,
    u_re: f64,
    u_im: f64,
    method: String,
    eigen_residual: f64,
}

fn eig(cfg: &RunConfig, mu: &[f64], x: &[f64], n_probe: usize, out: &mut dyn Write) -> Result<()> {
    if let Some(m) = mu.iter().find(|m| !(**m >= 0.0)) {
        return Err(usage(format!("mu = {m} must be >= 0")));
    }
    let rows = mu
        .par_iter()
        .map(|&m| {
            let res = eigen_residual(m, n_probe)?;
            x.iter()
                .map(|&xv| {
                    let s = eigfun_u_with(C64::new(xv, 0.0), m, &cfg.profile.eigen)?;
                    Ok(EigRow {
                        mu: m,
                        nu: eigenvalue_nu(m),
                        x: xv,
                        u_re: s.value.re,
                        u_im: s.value.im,
                        method: serde_json::to_value(s.method)
                            .ok()
                            .and_then(|v| v.as_str().map(str::to_string))
                            .unwrap_or_default(),
                        eigen_residual: res,
                    })
                })
                .collect::<cmfbound::Result<Vec<_>>>()
        })
        .collect::<cmfbound::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let mut t = Table::new(&["mu", "nu", "x", "u_re", "u_im", "method", "eigen_residual"]);
    for r in &rows {
        t.push(vec![
            r.mu.into(),
            r.nu.into(),
            r.x.into(),
            r.u_re.into(),
            r.u_im.into(),
            r.method.clone().into(),
            r.eigen_residual.into(),
        ]);
    }
    emit(cfg, &t, &rows, out)
}

#[derive(Serialize)]
struct CompareRow {
    method: &'static str,
    parameter: String,
    value: f64,
    reference: f64,
    relative_gap: f64,
}

fn row(method: &'static str, parameter: String, value: f64, reference: f64) -> CompareRow {
    CompareRow {
        method,
        parameter,
        value,
        reference,
        relative_gap: (value - reference) / reference.abs(),
    }
}

fn oracle_compare(cfg: &RunConfig, x0s: &[f64], veps: &[f64], deltas: &[f64], out: &mut dyn Write) -> Result<()> {
    let n = cfg.profile.nystrom_nodes;
    let jobs: Vec<(f64, f64)> = x0s.iter().flat_map(|&x| veps.iter().map(move |&v| (x, v))).collect();
    let mut rows: Vec<CompareRow> = jobs
        .par_iter()
        .map(|&(x0, v)| {
            let sp = PhiSolver::new(x0, cfg.profile.phi)?.solve(v)?;
            let ny = nystrom_solve(x0, v * v, n)?;
            let tag = format!("x0={};veps={}", g12(x0), g12(v));
            let p_star = ny.p_value();
            let dual = dual_bound_scan(x0, ny.eps(), &[p_star], n)?;
            Ok(vec![
                row("nystrom", format!("psi_x0[{tag}]"), ny.psi_at_x0, sp.psi_at_x0),
                row("nystrom", format!("norm_l2[{tag}]"), ny.norm_l2, sp.norm_l2),
                row("nystrom", format!("norm_hardy[{tag}]"), ny.norm_hardy, sp.norm_hardy),
                row("dual_bound", format!("p_star={}[{tag}]", g12(p_star)), dual[0].bound, ny.delta_star()),
            ])
        })
        .collect::<cmfbound::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let grid = log_t_grid(cfg.profile.grid_points, 70.0);
    let f0 = F0::exponential();
    let local_jobs: Vec<(f64, f64)> = x0s.iter().flat_map(|&x| deltas.iter().map(move |&d| (x, d))).collect();
    let local_rows = local_jobs
        .par_iter()
        .map(|&(x0, d)| {
            let g = grid_local_solve(&f0, x0, d, &grid)?;
            let c = solve_local_with(&f0, x0, d, &cfg.profile.local)?;
            Ok(row(
                "grid_nnls",
                format!("residual[x0={};delta={};n={}]", g12(x0), g12(d), grid.len()),
                g.residual_l2,
                c.residual_l2,
            ))
        })
        .collect::<cmfbound::Result<Vec<_>>>()?;
    rows.extend(local_rows);
    let mut t = Table::new(&["method", "parameter", "value", "reference", "relative_gap"]);
    for r in &rows {
        t.push(vec![r.method.into(), r.parameter.clone().into(), r.value.into(), r.reference.into(), r.relative_gap.into()]);
    }
    emit(cfg, &t, &rows, out)
}

fn demo_left(cfg: &RunConfig, eps: f64, k: &[f64], c: f64, out: &mut dyn Write) -> Result<()> {
    let rows = left_unbounded_demo(eps, k, c)?;
    let mut t = Table::new(&["k", "l2_discrepancy", "l2_quadrature", "gap"]);
    for r in &rows {
        t.push(vec![r.k.into(), r.l2_discrepancy.into(), r.l2_quadrature.into(), r.gap.into()]);
    }
    emit(cfg, &t, &rows, out)
}

fn verify(cfg: &RunConfig, only: Option<&str>, json: bool, out: &mut dyn Write) -> Result<bool> {
    let results: Vec<CheckResult> = match only {
        Some(key) => {
            if find_check(key).is_none() {
                bail!(usage(format!("unknown check '{key}'")));
            }
            vec![run_check(key, cfg.seed)?]
        }
        None => run_all(cfg.seed),
    };
    if json {
        write_json(out, &results)?;
    } else {
        for r in &results {
            writeln!(
                out,
                "{} {:>2} {:<13} {:>9.1} ms  {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.id,
                r.slug,
                r.elapsed_ms,
                r.detail
            )?;
        }
        let failed = results.iter().filter(|r| !r.passed).count();
        writeln!(out, "{} passed, {failed} failed", results.len() - failed)?;
        out.flush()?;
    }
    Ok(results.iter().all(|r| r.passed))
}
