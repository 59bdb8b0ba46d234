//! `synbench`: synthesizes CNN benchmark models from profiled convolution
//! traces.
//!
//! The pipeline is cluster → synthesize → assemble → export/report, and
//! every stage is exposed as a subcommand. Exit codes: 0 on success,
//! 1 on input or validation errors, 2 when a group's fitness error
//! exceeds the configured fail threshold.

mod commands;
mod config;

use std::path::PathBuf;
use std::process;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "synbench",
    version,
    about = "Synthesizes CNN benchmark models from profiled convolution traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a convolution trace into size groups with cost targets
    Cluster {
        /// Profiled convolution trace (CSV)
        #[arg(long)]
        trace: PathBuf,
        /// Pipeline config (JSON); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the cluster set JSON
        #[arg(long)]
        out: PathBuf,
        /// Override the configured scale factor
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Evolve channel widths against a cluster set and emit model + report
    Synth {
        /// Cluster set JSON produced by `cluster`
        #[arg(long)]
        clusters: PathBuf,
        /// Pipeline config (JSON); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the model JSON
        #[arg(long)]
        model: PathBuf,
        /// Where to write the report CSV
        #[arg(long)]
        out: PathBuf,
        /// Override the configured seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a model file to DOT or canonical JSON
    Export {
        /// Model JSON produced by `synth`
        #[arg(long)]
        model: PathBuf,
        /// Output format: `dot` or `json`
        #[arg(long)]
        format: String,
        /// Where to write the converted model
        #[arg(long)]
        out: PathBuf,
    },
    /// Run cluster → synth → export end to end into a directory
    Pipeline {
        /// Profiled convolution trace (CSV)
        #[arg(long)]
        trace: PathBuf,
        /// Pipeline config (JSON); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for clusters.json, model.json, model.dot, report.csv
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the configured seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured scale factor
        #[arg(long)]
        scale: Option<f64>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            process::exit(code);
        }
    };

    let result = match &cli.command {
        Command::Cluster { trace, config, out, scale } => {
            commands::cmd_cluster(trace, config.as_deref(), out, *scale)
        }
        Command::Synth { clusters, config, model, out, seed } => {
            commands::cmd_synth(clusters, config.as_deref(), model, out, *seed)
        }
        Command::Export { model, format, out } => commands::cmd_export(model, format, out),
        Command::Pipeline { trace, config, out_dir, seed, scale } => {
            commands::cmd_pipeline(trace, config.as_deref(), out_dir, *seed, *scale)
        }
    };

    if let Err(err) = result {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}
