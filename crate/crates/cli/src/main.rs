//! `edlab`: run, validate and list experiments.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edlab::harness::{
    emit_report, load_config, resolve_output_dir, run_experiment, Experiment, HarnessError, ReportFormat, OUT_ENV,
};

#[derive(Parser)]
#[command(name = "edlab", version, about = "Entropic dynamics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its report.
    Run {
        experiment: Experiment,
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; falls back to the config's `outputs`, then EDLAB_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the ensemble master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
    /// Check a configuration and print it with defaults filled.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available experiments.
    ListExperiments,
}

fn fail(err: &HarnessError) -> ExitCode {
    eprintln!("edlab: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                let _ = writeln!(stdout, "{:<18} {}", e.name(), e.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                let _ = stdout.write_all(cfg.to_json().as_bytes());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run {
            experiment,
            config,
            out,
            seed,
            format,
        } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let run = match run_experiment(&cfg, experiment, seed) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let env = std::env::var(OUT_ENV).ok();
            let root = resolve_output_dir(out.as_deref(), &cfg, env.as_deref());
            let dir = match run.write(&root) {
                Ok(d) => d,
                Err(e) => return fail(&e),
            };
            let _ = stdout.write_all(&emit_report(&run.report, format));
            eprintln!("edlab: artifacts in {}", dir.display());
            ExitCode::from(run.report.exit_code() as u8)
        }
    }
}
