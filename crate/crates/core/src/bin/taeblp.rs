//! `taeblp verify` runs the exact oracle suite; `taeblp run` executes one
//! experiment and writes its CSV and JSON files.
//!
//! Exit codes: 0 success, 1 failed check or run error, 2 configuration error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use bricklayers::config::{parse_pairs, RunConfig};
use bricklayers::experiments::WORKERS_ENV;
use bricklayers::oracle::{verify_suite, VerifyOptions, BETA_GRID};
use bricklayers::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "taeblp", version, about = "Exact simulation and verification for the exponential bricklayers process")]
#[command(after_help = format!("Worker threads are taken from {WORKERS_ENV} (default: all cores)."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact oracle suite and print one row per check.
    Verify(VerifyArgs),
    /// Run one experiment; `key=value` pairs override the config file.
    Run(RunArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Inverse temperatures of the algebraic checks (repeatable).
    #[arg(long = "beta")]
    betas: Vec<f64>,
    /// Truncation band of the exact generator sums.
    #[arg(long, default_value_t = 25)]
    band: i64,
    /// Scale p(d) by 1 + eps in the refresh tables (mutation test).
    #[arg(long, hide = true)]
    perturb_p: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// `ell,r`
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// Comma-separated increasing times.
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    omega_max: Option<String>,
    #[arg(long)]
    tail_tol: Option<String>,
    /// Further `key=value` overrides.
    pairs: Vec<String>,
}

impl RunArgs {
    fn to_map(&self) -> Result<BTreeMap<String, String>, Error> {
        let mut map = match &self.config {
            Some(p) => parse_pairs(&std::fs::read_to_string(p).map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?)?,
            None => BTreeMap::new(),
        };
        map.extend(parse_pairs(&self.pairs.join("\n"))?);
        let flags = [
            ("experiment", &self.experiment),
            ("beta", &self.beta),
            ("rho", &self.rho),
            ("theta", &self.theta),
            ("window", &self.window),
            ("boundary", &self.boundary),
            ("t", &self.t),
            ("t_grid", &self.t_grid),
            ("replicas", &self.replicas),
            ("seed", &self.seed),
            ("out", &self.out),
            ("omega_max", &self.omega_max),
            ("tail_tol", &self.tail_tol),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        Ok(map)
    }
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::InvalidParameter(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn verify(args: &VerifyArgs) -> ExitCode {
    let opts = VerifyOptions {
        betas: if args.betas.is_empty() { BETA_GRID.to_vec() } else { args.betas.clone() },
        band: args.band,
        p_perturbation: args.perturb_p,
        ..VerifyOptions::default()
    };
    if let Err(e) = opts.validate() {
        return exit_for(&e);
    }
    let reports = match verify_suite(&opts) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    println!("{:<20} {:<6} {:>12} {:>10}  detail", "check", "status", "max error", "tolerance");
    for r in &reports {
        let status = if r.passed { "ok" } else { "FAIL" };
        println!("{:<20} {:<6} {:>12.3e} {:>10.1e}  {}", r.id, status, r.max_error, r.tolerance, r.detail);
    }
    if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let cfg = match args.to_map().and_then(|m| RunConfig::from_pairs(&m)) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let report = match cfg.execute() {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    match report.write(&cfg.out) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => return exit_for(&e),
    }
    for e in &report.estimates {
        match e.reference {
            Some(r) => println!("{:<28} {:>14.6} +- {:<10.2e} reference {r:.6}", e.name, e.value, e.stderr),
            None => println!("{:<28} {:>14.6} +- {:<10.2e}", e.name, e.value, e.stderr),
        }
    }
    for c in &report.checks {
        println!("{:<20} {:<6} {}", c.name, if c.passed { "ok" } else { "FAIL" }, c.detail);
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Run(a) => run(a),
    }
}
