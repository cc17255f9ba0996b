//! `pmv` — train, score and audit verification models from the command
//! line.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data/format error,
//! 3 numeric abort.

mod commands;
mod data;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use pmv_core::Error;

#[derive(Parser)]
#[command(name = "pmv", version, about = "End-to-end verification with a learned pseudo-distance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file and a dataset.
    Train {
        /// Run configuration (key = value file).
        #[arg(long)]
        config: PathBuf,
        /// Dataset: `<path>.csv`, `csv:<path>` or `idx:<images>,<labels>`.
        #[arg(long)]
        data: String,
        /// Output directory (checkpoint.pmv, train_log.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trial list with a checkpoint and report EER / 1-AUC.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Trial list CSV (`enroll_ids;test_id;label`).
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        data: String,
        /// Per-trial score CSV output.
        #[arg(long)]
        scores_out: PathBuf,
        /// ROC operating-point CSV output.
        #[arg(long)]
        report_out: PathBuf,
    },
    /// Audit distance properties of a checkpoint over a dataset.
    Audit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        /// Output directory (one histogram CSV per property + summary).
        #[arg(long)]
        out: PathBuf,
        /// Optional config for audit_pairs / audit_triplets / audit_bins / seed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic Gaussian dataset.
    Synth {
        /// Config file carrying the oracle_* keys and seed.
        #[arg(long)]
        spec: PathBuf,
        /// Dataset CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a trial list from a dataset.
    Trials {
        #[arg(long)]
        data: String,
        /// `all_pairs` or `sampled:<n>:<target_fraction>`.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo oracle EER; with a checkpoint, also compare the
    /// trained distance model against the analytic optimum.
    Oracle {
        /// Config file carrying the oracle_* keys and seed.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `metric,value` CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump embeddings (`label,z0,...`) for plotting.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient check suite.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                // Bare `pmv` prints usage and is a usage error.
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Train { config, data, out } => commands::train(&config, &data, &out),
        Command::Eval {
            checkpoint,
            trials,
            data,
            scores_out,
            report_out,
        } => commands::eval(&checkpoint, &trials, &data, &scores_out, &report_out),
        Command::Audit {
            checkpoint,
            data,
            out,
            config,
        } => commands::audit(&checkpoint, &data, &out, config.as_deref()),
        Command::Synth { spec, out } => commands::synth(&spec, &out),
        Command::Trials {
            data,
            mode,
            out,
            seed,
        } => commands::trials(&data, &mode, &out, seed),
        Command::Oracle {
            spec,
            checkpoint,
            out,
        } => commands::oracle(&spec, checkpoint.as_deref(), &out),
        Command::Embed {
            checkpoint,
            data,
            out,
        } => commands::embed(&checkpoint, &data, &out),
        Command::Gradcheck { seed } => commands::gradcheck(seed),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
