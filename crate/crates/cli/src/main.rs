//! `ptlab`: run one experiment from a TOML configuration.
//!
//! Exit status 0 when every reported inequality holds, 2 when one fails and
//! 1 on configuration, input or numerical errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Config, MaximalOp, TruncationVariant};

/// Error printed as `error [kind]: message`.
#[derive(Debug)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Failure { kind: kind.to_string(), message: message.into() }
    }
}

impl From<ptlab_core::Error> for Failure {
    fn from(e: ptlab_core::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "ptlab", version, about = "Numerical experiments for parabolic p-Laplace type problems")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Parent directory of the run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve once and check the energy and the weak residual.
    Solve,
    /// Solve for a ladder of mollified data and compare the solutions.
    Existence,
    /// Truncate `u - w` off the good set and measure its bounds.
    Truncate {
        #[arg(long)]
        lambda_percentile: Option<f64>,
        #[arg(long, value_enum)]
        variant: Option<TruncationVariant>,
    },
    /// Maximal function bounds on random data.
    Maximal {
        #[arg(long, value_enum)]
        op: Option<MaximalOp>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Whitney covers of random closed sets.
    Whitney,
    /// Uniform capacity thickness of the complement of the domain.
    Capacity,
    /// Global gradient bound by the data.
    VerifyApriori,
    /// Energy, reverse Holder and higher integrability on an intrinsic cylinder.
    VerifyHigherInt,
    /// Self-improvement of the integrability exponent.
    Gehring,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Existence => "existence",
            Command::Truncate { .. } => "truncate",
            Command::Maximal { .. } => "maximal",
            Command::Whitney => "whitney",
            Command::Capacity => "capacity",
            Command::VerifyApriori => "verify-apriori",
            Command::VerifyHigherInt => "verify-higher-int",
            Command::Gehring => "gehring",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::new("config", "--config is required"))?;
    let (mut cfg, bytes) = Config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new("config", format!("cannot start {n} threads: {e}")))?;
    }
    let mut tag = cli.command.name().to_string();
    match &cli.command {
        Command::Truncate { lambda_percentile, variant } => {
            if let Some(p) = lambda_percentile {
                cfg.truncation.percentile = *p;
            }
            if let Some(v) = variant {
                cfg.truncation.variant = *v;
            }
            tag.push_str(&format!(" {} {:?}", cfg.truncation.percentile, cfg.truncation.variant));
        }
        Command::Maximal { op, theta, q } => {
            if let Some(o) = op {
                cfg.maximal.op = *o;
            }
            if let Some(t) = theta {
                cfg.maximal.theta = *t;
            }
            if let Some(q) = q {
                cfg.maximal.q = *q;
            }
            tag.push_str(&format!(" {:?} {} {}", cfg.maximal.op, cfg.maximal.theta, cfg.maximal.q));
        }
        _ => {}
    }
    let seed = cfg.seed;
    let started = std::time::SystemTime::now();
    let outcome = match cli.command {
        Command::Solve => commands::run_solve(&cfg),
        Command::Existence => commands::run_existence(&cfg),
        Command::Truncate { .. } => commands::run_truncate(&cfg, seed),
        Command::Maximal { .. } => commands::run_maximal(&cfg, seed),
        Command::Whitney => commands::run_whitney(&cfg, seed),
        Command::Capacity => commands::run_capacity(&cfg),
        Command::VerifyApriori => commands::run_verify_apriori(&cfg),
        Command::VerifyHigherInt => commands::run_verify_higher_int(&cfg),
        Command::Gehring => commands::run_gehring(&cfg),
    }?;
    let run = output::RunInfo { command: cli.command.name(), tag: &tag, seed, config_path: path, started };
    let dir = output::write(&cli.out, &bytes, &run, &outcome)?;
    let pass = outcome.reports.iter().all(|r| r.pass);
    for r in &outcome.reports {
        println!(
            "{:<36} ratio {:>12.5e}  bound {:>10.4e}  {}",
            r.name,
            r.ratio,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    println!("report: {}", dir.join("report.json").display());
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(f) => {
            eprintln!("error [{}]: {}", f.kind, f.message);
            ExitCode::from(1)
        }
    }
}
