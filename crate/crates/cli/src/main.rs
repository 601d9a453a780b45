//! `apgdiag`: simulate SAN/database telemetry and diagnose slow query runs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use apgdiag_core::engine::ReportFormat;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "apgdiag", version)]
#[command(about = "Cross-layer root-cause diagnosis for query slowdowns on a SAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with injected faults and ground truth
    Simulate {
        /// Scenario JSON file, or the name of a bundled scenario
        /// (baseline, lock_contention, cpu_saturation,
        /// controller_port_congestion, volume_contention, plan_change,
        /// zoning_change, combined)
        #[arg(long)]
        scenario: String,
        /// RNG seed [default: the scenario's own seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Output data directory; must be missing or empty
        #[arg(long)]
        out: PathBuf,
    },

    /// Diagnose one run of a query. Exits 2 when the run slowed and causes
    /// were found, 0 otherwise, 1 on error
    Diagnose {
        #[command(flatten)]
        args: DiagnoseArgs,
    },

    /// Print baseline statistics of a query's run history
    Baseline {
        /// Data directory
        #[arg(long)]
        data: PathBuf,
        /// Query id
        #[arg(long)]
        query: String,
    },

    /// Check a data directory for format and graph violations; exits 1 if any
    Validate {
        /// Data directory
        #[arg(long)]
        data: PathBuf,
    },

    /// Print the full evidence trace of one cause from a JSON report
    Explain {
        /// Report written by `diagnose --format json`
        #[arg(long)]
        report: PathBuf,
        /// Cause id
        #[arg(long)]
        cause: String,
    },
}

/// Threshold flags override `diagnose.toml` in the data directory, which
/// overrides the built-in defaults.
#[derive(Debug, clap::Args)]
struct DiagnoseArgs {
    /// Data directory
    #[arg(long)]
    data: PathBuf,
    /// Query id
    #[arg(long)]
    query: String,
    /// Run id
    #[arg(long)]
    run: String,
    /// Symptoms database JSON [default: the bundled database]
    #[arg(long)]
    symptoms: Option<PathBuf>,
    /// Output format: json or text
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Relative query slowdown that counts as slowed [default: 0.2]
    #[arg(long)]
    theta: Option<f64>,
    /// Anomaly z-score threshold [default: 3.0]
    #[arg(long)]
    tau: Option<f64>,
    /// Relative operator slowdown that counts as degraded [default: 0.2]
    #[arg(long)]
    delta: Option<f64>,
    /// Minimum number of historical runs, at least 2 [default: 5]
    #[arg(long)]
    k: Option<usize>,
    /// Absolute operator slowdown in seconds also required [default: 1.0]
    #[arg(long)]
    floor_s: Option<f64>,
    /// Most recent runs used as history [default: 20]
    #[arg(long)]
    history_limit: Option<usize>,
}

fn main() -> ExitCode {
    // Usage errors exit 1 like every other error; 2 means "slowdown found".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate {
            scenario,
            seed,
            out,
        } => commands::simulate(&scenario, seed, &out),
        Command::Diagnose { args } => commands::diagnose(&args),
        Command::Baseline { data, query } => commands::baseline(&data, &query),
        Command::Validate { data } => commands::validate(&data),
        Command::Explain { report, cause } => commands::explain(&report, &cause),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
