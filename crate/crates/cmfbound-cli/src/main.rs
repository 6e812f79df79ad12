mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use commands::UsageError;
use config::{Command, Format, RunConfig};

/// Worst-case error bounds for completely monotone functions known in L²(0,1).
#[derive(Debug, Parser)]
#[command(name = "cmfbound", version)]
struct Cli {
    /// JSON run configuration (as printed by --dump-config); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the randomised checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write results here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Simpson step in μ for the spectral solver.
    #[arg(long, global = true)]
    mu_step: Option<f64>,
    /// Fixed spectral truncation.
    #[arg(long, global = true)]
    mu_max: Option<f64>,
    /// μ above which eigenfunctions use the asymptotic form.
    #[arg(long, global = true)]
    mu_switch: Option<f64>,
    /// Certificate tolerance of the local solver.
    #[arg(long, global = true)]
    tol_cert: Option<f64>,
    /// Gauss-Legendre nodes of the Nyström oracle.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Points of the NNLS grid oracle.
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

impl Cli {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let mut cfg = RunConfig::from_json(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", p.display())))?;
                if let Some(c) = self.command {
                    cfg.command = c;
                }
                cfg
            }
            None => match self.command {
                Some(c) => RunConfig::new(c),
                None => return Err(UsageError("a subcommand or --config is required".into()).into()),
            },
        };
        cfg.threads = self.threads.or(cfg.threads);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.output = self.output.or(cfg.output);
        cfg.format = self.format.or(cfg.format);
        let p = &mut cfg.profile;
        if let Some(v) = self.mu_step {
            p.phi.mu_step = v;
        }
        if self.mu_max.is_some() {
            p.phi.mu_max = self.mu_max;
        }
        if let Some(v) = self.mu_switch {
            p.eigen.mu_switch = v;
        }
        if let Some(v) = self.tol_cert {
            p.local.tol_cert = v;
        }
        if let Some(v) = self.nodes {
            p.nystrom_nodes = v;
        }
        if let Some(v) = self.grid_points {
            p.grid_points = v;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let dump = cli.dump_config;
    let cfg = cli.resolve()?;
    if dump {
        println!("{}", cfg.to_json());
        return Ok(true);
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    commands::run(&cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 1;
    }
    match err.chain().find_map(|e| e.downcast_ref::<cmfbound::Error>()) {
        Some(cmfbound::Error::Domain { .. } | cmfbound::Error::InvalidArgument(_) | cmfbound::Error::Infeasible { .. }) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::from(1),
                _ => {
                    eprintln!("\n{}", Cli::command().render_usage());
                    ExitCode::from(1)
                }
            };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = exit_code(&e);
            if e.chain().any(|c| c.is::<UsageError>()) {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(code)
        }
    }
}
