use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transport_bounds_cli::commands::{cmd_estimate, cmd_simulate, cmd_sweep};
use transport_bounds_cli::config::{
    parse_list, read_pairs, RunConfig, RunSettings, SimulateSettings,
};
use transport_bounds_cli::CliError;

/// Bounds on a transported treatment effect under unmeasured shift.
#[derive(Parser)]
#[command(name = "transport-bounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One row of bounds per γ, for both estimators.
    Estimate(RunArgs),
    /// Long-format table for plotting bounds against γ.
    Sweep(RunArgs),
    /// Draw a synthetic two-location dataset.
    Simulate(SimArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source CSV with columns x1..xd,w,y.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target CSV with columns x1..xd.
    #[arg(long)]
    target: Option<PathBuf>,
    /// identity, intercept or poly:k.
    #[arg(long)]
    basis: Option<String>,
    /// Comma-separated γ = log Γ values.
    #[arg(long, value_name = "LIST")]
    gamma_grid: Option<String>,
    /// Misspecification multiplier M ≥ 1.
    #[arg(long)]
    m: Option<f64>,
    /// Number of bootstrap resamples (0 = off).
    #[arg(long, value_name = "N")]
    bootstrap: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Treatment probability in the source trial.
    #[arg(long)]
    propensity: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// a, b or custom.
    #[arg(long)]
    setup: Option<String>,
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// log Γ*.
    #[arg(long)]
    gamma_star: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha0: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Four comma-separated values.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// uniform or beta.
    #[arg(long)]
    covariates: Option<String>,
}

fn run_config(args: RunArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(p) => RunSettings::from_pairs(&read_pairs(p)?)?,
        None => RunSettings::default(),
    };
    let flags = RunSettings {
        source: args.source,
        target: args.target,
        basis: args.basis,
        gamma_grid: args.gamma_grid.map(|g| parse_list("gamma-grid", &g)).transpose()?,
        m: args.m,
        bootstrap: args.bootstrap,
        level: args.level,
        seed: args.seed,
        out: args.out,
        propensity: args.propensity,
    };
    file.merge(flags).finish()
}

fn sim_settings(args: SimArgs) -> Result<SimulateSettings, CliError> {
    let file = match &args.config {
        Some(p) => SimulateSettings::from_pairs(&read_pairs(p)?)?,
        None => SimulateSettings::default(),
    };
    let flags = SimulateSettings {
        setup: args.setup,
        n_total: args.n_total,
        seed: args.seed,
        out: args.out,
        gamma_star: args.gamma_star,
        alpha0: args.alpha0,
        sigma: args.sigma,
        mu: args.mu.map(|v| parse_list("mu", &v)).transpose()?,
        beta: args.beta.map(|v| parse_list("beta", &v)).transpose()?,
        covariates: args.covariates,
    };
    Ok(file.merge(flags))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(args) => {
            let cfg = run_config(args)?;
            let a = cmd_estimate(&cfg)?;
            for w in &a.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("wrote {}", cfg.out.join("bounds.csv").display());
        }
        Command::Sweep(args) => {
            let cfg = run_config(args)?;
            cmd_sweep(&cfg)?;
            eprintln!("wrote {}", cfg.out.join("sweep.csv").display());
        }
        Command::Simulate(args) => {
            let (cfg, out) = sim_settings(args)?.finish()?;
            let s = cmd_simulate(&cfg, &out)?;
            eprintln!(
                "wrote {} ({} source, {} target units)",
                out.display(),
                s.n_source,
                s.n_target
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
