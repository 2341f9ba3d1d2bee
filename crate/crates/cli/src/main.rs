use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcr_cli::config::{self, ConfigError, Kind};
use qcr_cli::report::Status;
use qcr_cli::{render, run, EXIT_CHECK_FAILED, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "qcr", version, about = "Layered quantum causal model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Observational table of a layered process under an instrument scheme.
    Simulate(RunArgs),
    /// Reconstruct a layered process from its observational table.
    Tomography(RunArgs),
    /// Reverse an unbiased layered process and compare statistics.
    Reverse(RunArgs),
    /// Layering verdict or counting obstruction for a graph.
    Identifiability(RunArgs),
    /// Causal Markov condition and do-interventions on a functional model.
    Classical(RunArgs),
    /// Human-readable summary of a report.
    Render {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `output_dir`, else the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
}

fn set_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("QCR_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("QCR_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("QCR_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn exit_for(err: &anyhow::Error) -> ExitCode {
    if err.downcast_ref::<ConfigError>().is_some() {
        ExitCode::from(EXIT_INVALID)
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn execute(kind: Kind, args: RunArgs) -> ExitCode {
    let result = config::load(&args.config).and_then(|cfg| {
        let out = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        run::run(kind, &cfg, &out, args.tol).map(|r| (r, out))
    });
    match result {
        Ok((report, out)) => {
            eprintln!("{kind}: {} (report in {})", match report.status {
                Status::Ok => "ok",
                Status::CheckFailed => "check failed",
            }, out.join("report.json").display());
            match report.status {
                Status::Ok => ExitCode::SUCCESS,
                Status::CheckFailed => ExitCode::from(EXIT_CHECK_FAILED),
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_for(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INVALID);
    }
    match cli.command {
        Command::Simulate(a) => execute(Kind::Simulate, a),
        Command::Tomography(a) => execute(Kind::Tomography, a),
        Command::Reverse(a) => execute(Kind::Reverse, a),
        Command::Identifiability(a) => execute(Kind::Identifiability, a),
        Command::Classical(a) => execute(Kind::Classical, a),
        Command::Render { report } => {
            let text = match std::fs::read_to_string(&report) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", report.display());
                    return ExitCode::from(EXIT_INVALID);
                }
            };
            match render::parse_report(&text, &report.display().to_string()) {
                Ok(r) => {
                    print!("{}", render::render(&r));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_INVALID)
                }
            }
        }
    }
}
