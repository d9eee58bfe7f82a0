use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use crossbif_cli::{execute, thread_cap, CliError, Invocation, Mode};

/// Bifurcations of fixed points in symplectic map families and Poincaré
/// maps of straight-line librations.
#[derive(Parser)]
#[command(name = "crossbif", version)]
struct Args {
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the classification point / seed / crossing target in eps.
    #[arg(long, allow_negative_numbers = true)]
    seed_eps: Option<f64>,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long, value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return fail(CliError::Config(e.to_string().trim().to_owned())),
    };
    match thread_cap(std::env::var("TOOL_THREADS").ok().as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                return fail(CliError::Config(format!("thread pool: {e}")));
            }
        }
        Ok(None) => {}
        Err(e) => return fail(e),
    }
    let inv = Invocation {
        mode: args.mode,
        config: args.config,
        out: args.out,
        seed_eps: args.seed_eps,
        tol: args.tol,
    };
    match execute(&inv) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
