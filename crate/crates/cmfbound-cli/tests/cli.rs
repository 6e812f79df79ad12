use std::process::{Command, Output};

fn cmfbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmfbound"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Parses CSV output into a header and numeric-or-text rows.
fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let j = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[j].parse().unwrap()).collect()
}

#[test]
fn malformed_range_is_a_usage_error() {
    for bad in ["1e-5:1e-9", "1e-5", "x:1", "0:1e-5"] {
        let o = cmfbound(&["powerlaw", "--eps-decades", bad]);
        assert_eq!(o.status.code(), Some(1), "{bad}");
        assert!(stderr(&o).contains("Usage:"), "{}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let o = cmfbound(&[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failures_exit_two() {
    // below the dense-solve resolution of the Nyström oracle
    let o = cmfbound(&["oracle-compare", "--x0", "2", "--veps", "1e-6"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // truncation far too short for the tail rule
    let o = cmfbound(&["delta-star", "--veps", "1e-3", "--mu-max", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn verify_only_pythagoras() {
    let o = cmfbound(&["verify", "--only", "pythagoras"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.starts_with("PASS  4 pythagoras"), "{out}");
    assert!(out.contains("1 passed, 0 failed"));
}

#[test]
fn verify_json_and_exit_three_on_failure() {
    for key in ["unit-branch", "2"] {
        let o = cmfbound(&["verify", "--only", key, "--json"]);
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        let results = v.as_array().unwrap();
        assert_eq!(results.len(), 1);
        let passed = results[0]["passed"].as_bool().unwrap();
        assert_eq!(o.status.code(), Some(if passed { 0 } else { 3 }), "{key}");
    }
    let o = cmfbound(&["verify", "--only", "no-such-check"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn powerlaw_slope_matches_gamma_star() {
    let o = cmfbound(&["powerlaw", "--x0", "2", "--eps-decades", "1e-9:1e-5"]);
    assert!(o.status.success());
    let (h, rows) = csv_rows(&stdout(&o));
    assert_eq!(h, ["eps", "veps", "delta_star", "asymptotic", "ratio", "local_slope"]);
    assert_eq!(rows.len(), 9);
    let eps = column(&h, &rows, "eps");
    let d = column(&h, &rows, "delta_star");
    let n = eps.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = eps.iter().zip(&d).map(|(e, d)| (e.ln(), d.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    assert!((sxy / sxx - 1.0 / 3.0).abs() < 0.01, "slope {}", sxy / sxx);
    assert!(stderr(&o).contains("fitted slope"));
}

#[test]
fn local_at_zero_offset_has_no_violations() {
    let o = cmfbound(&["local", "--delta", "0", "--x0", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let s = &v["states"][0];
    assert_eq!(s["violations"].as_array().unwrap().len(), 0);
    assert_eq!(s["residual_l2"].as_f64().unwrap(), 0.0);
    assert!(s["certificate"]["passed"].as_bool().unwrap());
}

#[test]
fn local_envelope_trace_csv() {
    let dir = std::env::temp_dir().join(format!("cmfbound-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let trace = dir.join("trace.csv");
    let o = cmfbound(&["local", "--eps", "0.01", "--trace-points", "50", "--trace", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let (upper, lower) = (v["upper"].as_f64().unwrap(), v["lower"].as_f64().unwrap());
    let f0 = v["f0_at_x0"].as_f64().unwrap();
    assert!(lower < f0 && f0 < upper);
    let (h, rows) = csv_rows(&std::fs::read_to_string(&trace).unwrap());
    assert_eq!(h, ["branch", "t", "c", "c_hat"]);
    assert_eq!(rows.len(), 100);
    assert!(column(&h, &rows, "c_hat").iter().all(|c| *c > -1e-9));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn local_rejects_conflicting_modes() {
    let o = cmfbound(&["local", "--eps", "0.01", "--delta", "1e-3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cmfbound(&["local", "--f0", "0:1", "--slopes"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cmfbound(&["local", "--delta", "-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_round_trip() {
    let dir = std::env::temp_dir().join(format!("cmfbound-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let args = ["--seed", "11", "--nodes", "300", "delta-star", "--x0", "1.5", "--eps", "1e-6,1e-4"];
    let dump = cmfbound(&[&["--dump-config"][..], &args[..]].concat());
    assert!(dump.status.success());
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, stdout(&dump)).unwrap();
    let from_flags = cmfbound(&args);
    let from_file = cmfbound(&["--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    assert_eq!(stdout(&from_flags), stdout(&from_file));
    let again = cmfbound(&["--config", cfg.to_str().unwrap(), "--dump-config"]);
    assert_eq!(stdout(&again), stdout(&dump));
    // unknown keys are rejected
    std::fs::write(&cfg, r#"{"command": {"name": "verify"}, "colour": 1}"#).unwrap();
    assert_eq!(cmfbound(&["--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

fn significant_digits(s: &str) -> usize {
    let mant = s.split(['e', 'E']).next().unwrap();
    let digits: String = mant.chars().filter(char::is_ascii_digit).collect();
    digits.trim_start_matches('0').len()
}

#[test]
fn csv_has_twelve_significant_digits() {
    let o = cmfbound(&["delta-star", "--x0", "2", "--eps", "1e-7,1e-5", "--veps", "0.003"]);
    let (h, rows) = csv_rows(&stdout(&o));
    let mut longest = 0;
    for r in &rows {
        for (name, cell) in h.iter().zip(r) {
            let x: f64 = cell.parse().unwrap();
            let sd = significant_digits(cell);
            assert!(sd <= 12, "{name} = {cell}");
            longest = longest.max(sd);
            let rounded: f64 = format!("{x:.11e}").parse().unwrap();
            assert_eq!(x, rounded, "{name} = {cell}");
        }
    }
    assert_eq!(longest, 12);
}

#[test]
fn threads_and_output_file() {
    let path = std::env::temp_dir().join(format!("cmfbound-left-{}.csv", std::process::id()));
    let o = cmfbound(&["--threads", "2", "-o", path.to_str().unwrap(), "demo-left", "--k", "50,5000"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let (h, rows) = csv_rows(&std::fs::read_to_string(&path).unwrap());
    let gap = column(&h, &rows, "gap");
    let l2 = column(&h, &rows, "l2_discrepancy");
    assert!(gap[1] > gap[0]);
    assert!(l2.iter().all(|x| (x - 0.01).abs() < 1e-9));
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn eig_and_oracle_compare_tables() {
    let o = cmfbound(&["eig", "--mu", "1,2", "--x", "0.5,1"]);
    let (h, rows) = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 4);
    assert!(column(&h, &rows, "eigen_residual").iter().all(|r| *r < 1e-6));
    let o = cmfbound(&["oracle-compare", "--x0", "2", "--veps", "1e-2", "--delta", "1e-3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = csv_rows(&stdout(&o));
    assert_eq!(h, ["method", "parameter", "value", "reference", "relative_gap"]);
    let gaps = column(&h, &rows, "relative_gap");
    for (r, g) in rows.iter().zip(&gaps) {
        let tol = if r[0] == "grid_nnls" { 1e-3 } else { 1e-4 };
        assert!(g.abs() < tol, "{r:?}");
    }
}
