use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use terrace_lab_cli::manifest::{verify_manifest, RunManifest, Status};
use terrace_lab_cli::runner::{combined_exit_code, render, run_scenarios};
use terrace_lab_cli::{Command, Context};

#[derive(Parser)]
#[command(name = "terrace-lab", version, about = "Propagating-terrace experiments for periodic reaction-diffusion equations")]
struct Cli {
    /// Scenario file (TOML); repeat to run several scenarios.
    #[arg(long = "config", global = true)]
    configs: Vec<PathBuf>,
    /// Base output directory; each scenario writes to <out>/<name>/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of scenarios run in parallel.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    /// Treat unmet hypotheses as failures.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List periodic solutions of the spatially homogeneous equation with their stability.
    Ode,
    /// Run the PDE and write snapshots and level tracks.
    Simulate,
    /// Extract the propagating terrace and check its structure.
    Terrace,
    /// Run the requested convergence, comparison and certification checks.
    Verify,
    /// Print the checks recorded in run directories.
    Report { dirs: Vec<PathBuf> },
    /// Check that every file listed in a run manifest is present and unchanged.
    VerifyManifest { dirs: Vec<PathBuf> },
}

fn report(dirs: &[PathBuf], strict: bool) -> i32 {
    let mut code = 0;
    for dir in dirs {
        match RunManifest::read(dir) {
            Ok(m) => {
                println!("== {} [{}] config {}", m.scenario, m.command, &m.config_hash[..m.config_hash.len().min(12)]);
                println!("files: {}", m.files.len());
                for c in &m.checks {
                    println!("{c}");
                    if c.status == Status::Fail || (strict && c.status == Status::HypothesesUnmet) {
                        code = code.max(1);
                    }
                }
                if let Some(e) = &m.error {
                    println!("error: {e}");
                    code = code.max(3);
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                code = code.max(2);
            }
        }
    }
    code
}

fn check_manifests(dirs: &[PathBuf]) -> i32 {
    let mut code = 0;
    for dir in dirs {
        match verify_manifest(dir) {
            Ok(problems) if problems.is_empty() => println!("{}: ok", dir.display()),
            Ok(problems) => {
                for p in problems {
                    println!("{}: {p}", dir.display());
                }
                code = code.max(1);
            }
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                code = code.max(2);
            }
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match &cli.command {
        Cmd::Ode => Command::Ode,
        Cmd::Simulate => Command::Simulate,
        Cmd::Terrace => Command::Terrace,
        Cmd::Verify => Command::Verify,
        Cmd::Report { dirs } => return ExitCode::from(report(dirs, cli.strict) as u8),
        Cmd::VerifyManifest { dirs } => return ExitCode::from(check_manifests(dirs) as u8),
    };
    if cli.configs.is_empty() {
        eprintln!("error: at least one --config is required");
        return ExitCode::from(2);
    }
    let ctx = Context::from_env(cli.strict);
    let results = run_scenarios(cmd, &cli.configs, cli.out.as_deref(), cli.jobs, &ctx);
    for r in &results {
        print!("{}", render(r));
    }
    ExitCode::from(combined_exit_code(&results, cli.strict) as u8)
}
