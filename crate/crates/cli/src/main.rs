use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hermite_burgers_cli::{
    cmd_report, cmd_sample, cmd_solve, cmd_validate, cmd_verify, exit, CliError, ExperimentConfig, Format, RunOptions,
    VerifyCheck,
};

/// Hermite-sheet sampling, stochastic Burgers solves and statistical checks.
#[derive(Parser, Debug)]
#[command(name = "hb", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.master_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides run.stream_index.
    #[arg(long, global = true)]
    stream: Option<u64>,
    /// Overrides run.n_samples and verify.n_samples.
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    /// Output directory (default `hb-out`; for `report --rerun`, `<manifest dir>/rerun`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true, env = "HB_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Bin)]
    format: Format,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the model parameters against the admissibility conditions.
    Validate,
    /// Write Hermite-sheet samples.
    Sample,
    /// Solve the equation, driven by a stored sheet or by freshly sampled ones.
    Solve {
        /// Binary sheet file to use as the noise.
        #[arg(long)]
        noise: Option<PathBuf>,
    },
    /// Run a statistical check and write JSON and CSV reports.
    Verify {
        #[arg(value_enum)]
        check: VerifyCheck,
    },
    /// Check a manifest's output digests, or re-run it and compare.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        rerun: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Parse("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut config =
        ExperimentConfig::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    if let Some(s) = cli.seed {
        config.run.master_seed = s;
    }
    if let Some(s) = cli.stream {
        config.run.stream_index = s;
    }
    if let Some(n) = cli.n_samples {
        config.run.n_samples = n;
        config.verify.n_samples = n;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let mut out = std::io::stdout().lock();
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("hb-out"));
    let opts = RunOptions { out: dir, format: cli.format, threads: cli.threads };
    match &cli.command {
        Cmd::Validate => cmd_validate(&load_config(cli)?, &mut out),
        Cmd::Sample => cmd_sample(&load_config(cli)?, &opts, &mut out),
        Cmd::Solve { noise } => cmd_solve(&load_config(cli)?, noise.as_deref(), &opts, &mut out),
        Cmd::Verify { check } => cmd_verify(&load_config(cli)?, *check, &opts, &mut out),
        Cmd::Report { manifest, rerun } => cmd_report(manifest, *rerun, cli.out.as_deref(), cli.threads, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(&cli).unwrap_or_else(|e| {
        let _ = std::io::stdout().flush();
        eprintln!("error: {e}");
        e.exit_code()
    });
    debug_assert!((exit::OK..=exit::CHECK_FAILED).contains(&code));
    ExitCode::from(code as u8)
}
