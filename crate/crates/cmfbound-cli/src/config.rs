use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Subcommand, ValueEnum};
use cmfbound::acceptance::DEFAULT_SEED;
use cmfbound::local_caprini::LocalOptions;
use cmfbound::phi_solver::PhiOptions;
use cmfbound::special_fn::EigenOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Closed interval `lo:hi` of positive reals, written as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
        let lo: f64 = a.trim().parse().map_err(|_| format!("bad lower end '{a}'"))?;
        let hi: f64 = b.trim().parse().map_err(|_| format!("bad upper end '{b}'"))?;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(format!("need 0 < LO < HI, got {lo}:{hi}"));
        }
        Ok(Range { lo, hi })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}:{:e}", self.lo, self.hi)
    }
}

fn parse_range(s: &str) -> Result<Range, String> {
    s.parse()
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    /// Δ*(ϵ) over a log range of ϵ and the fitted power-law slope.
    Powerlaw {
        #[arg(long, default_value_t = 2.0)]
        x0: f64,
        /// ϵ range LO:HI, sampled log-uniformly.
        #[arg(long, default_value = "1e-9:1e-5", value_parser = parse_range)]
        eps_decades: Range,
        #[arg(long, default_value_t = 2)]
        per_decade: usize,
    },
    /// Δ* and the φ-problem norms at given ϵ (or regularisation ε) values.
    DeltaStar {
        #[arg(long, default_value_t = 2.0)]
        x0: f64,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        veps: Vec<f64>,
    },
    /// Local worst-case problem around a completely monotone f₀.
    Local {
        /// `exp` or atoms `t:a,t:a,...`.
        #[arg(long, default_value = "exp")]
        f0: String,
        #[arg(long, default_value_t = 2.0)]
        x0: f64,
        /// Two-sided envelope at this L² radius.
        #[arg(long, conflicts_with_all = ["delta", "slopes"])]
        eps: Option<f64>,
        /// Single solve at f(x₀) = f₀(x₀) + δ.
        #[arg(long, allow_negative_numbers = true, conflicts_with = "slopes")]
        delta: Option<f64>,
        /// Slopes E± of the envelope (f₀ = exp only).
        #[arg(long)]
        slopes: bool,
        #[arg(long, default_value_t = 400)]
        trace_points: usize,
        /// Write the certificate trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Eigenfunctions u(x;μ), eigenvalues ν(μ) and the eigen-relation residual.
    Eig {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,5")]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1,2")]
        x: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        n_probe: usize,
    },
    /// Comparison of the solvers against the brute-force oracles.
    OracleCompare {
        #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
        x0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2")]
        veps: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "1e-3,-1e-3")]
        delta: Vec<f64>,
    },
    /// The family f + ϵ√(2K)e^{-Kx}: L²-close on (0,1), unbounded at x ≤ 0.
    DemoLeft {
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_value = "50,500,5000,50000")]
        k: Vec<f64>,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        c: f64,
    },
    /// Run the acceptance checks.
    Verify {
        /// Only this check (slug or number).
        #[arg(long)]
        only: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Profile {
    pub phi: PhiOptions,
    pub local: LocalOptions,
    pub eigen: EigenOptions,
    pub nystrom_nodes: usize,
    pub grid_points: usize,
}

impl Default for Profile {
    fn default() -> Self {
        Self {
            phi: PhiOptions::default(),
            local: LocalOptions::default(),
            eigen: EigenOptions::default(),
            nystrom_nodes: 400,
            grid_points: 2000,
        }
    }
}

/// Everything a run depends on; `--dump-config` prints it and `--config`
/// reads it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub profile: Profile,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            threads: None,
            seed: DEFAULT_SEED,
            output: None,
            format: None,
            profile: Profile::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Output format, defaulting per command.
    pub fn format(&self) -> Format {
        self.format.unwrap_or(match self.command {
            Command::Local { .. } | Command::Verify { .. } => Format::Json,
            _ => Format::Csv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let r: Range = "1e-9:1e-5".parse().unwrap();
        assert_eq!((r.lo, r.hi), (1e-9, 1e-5));
        assert!("1e-5:1e-9".parse::<Range>().is_err());
        assert!("1e-5".parse::<Range>().is_err());
        assert!("0:1".parse::<Range>().is_err());
        assert!("a:1".parse::<Range>().is_err());
    }

    #[test]
    fn config_round_trips() {
        let mut cfg = RunConfig::new(Command::Local {
            f0: "0:0.5,1.5:0.25".into(),
            x0: 2.0,
            eps: None,
            delta: Some(-1e-3 / 3.0),
            slopes: false,
            trace_points: 123,
            trace: Some("trace.csv".into()),
        });
        cfg.threads = Some(3);
        cfg.format = Some(Format::Csv);
        cfg.profile.phi.mu_max = Some(0.1 + 0.2);
        cfg.profile.local.tol_cert = 1.0 / 3.0 * 1e-9;
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"command": {"name": "demo-left", "eps": 0.01, "k": [50.0], "c": 0.0}}"#).unwrap();
        assert_eq!(cfg.profile, Profile::default());
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.format(), Format::Csv);
        assert!(RunConfig::from_json(r#"{"command": {"name": "demo-left"}, "bogus": 1}"#).is_err());
    }
}
