//! Config-driven experiment runner.
//!
//! `cuspidal run <config.json> [--out DIR] [--set key=value]... [--threads N]`
//! Exit codes: 0 success, 2 config validation error, 3 numerical failure.

mod config;
mod experiments;
mod svg;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cuspidal", version, about = "Symplectic invariants of singular Lagrangian fibrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Output directory for artifacts (default: $CUSPIDAL_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path overrides, e.g. --set h_grid.0=0.2
        #[arg(long = "set")]
        set: Vec<String>,
        /// Worker threads for grid sweeps (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

fn emit_error(out: Option<&PathBuf>, kind: &str, message: String) {
    let report = ErrorReport { error: ErrorBody { kind, message } };
    let text = serde_json::to_string_pretty(&report).unwrap_or_default();
    eprintln!("{text}");
    if let Some(dir) = out {
        let _ = fs::create_dir_all(dir);
        let _ = fs::write(dir.join("error.json"), format!("{text}\n"));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, set, threads } => {
            if let Some(n) = threads {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let out_dir = out
                .or_else(|| std::env::var_os("CUSPIDAL_OUT").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));

            let text = match fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    emit_error(Some(&out_dir), "validation", format!("cannot read {}: {e}", config.display()));
                    return ExitCode::from(2);
                }
            };
            let parsed = match config::load(&text, &set) {
                Ok(c) => c,
                Err(e) => {
                    emit_error(Some(&out_dir), "validation", format!("{e:#}"));
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = fs::create_dir_all(&out_dir) {
                emit_error(Some(&out_dir), "io", format!("cannot create {}: {e}", out_dir.display()));
                return ExitCode::from(3);
            }
            match experiments::run(&parsed, &out_dir) {
                Ok(summary) => {
                    println!("{summary}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    emit_error(Some(&out_dir), "numerical", format!("{e:#}"));
                    ExitCode::from(3)
                }
            }
        }
    }
}
