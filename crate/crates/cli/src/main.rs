use std::fs::File;
use std::io::{self, BufWriter};
use std::process::ExitCode;

use clap::Parser;
use secrecy_cli::config::ExperimentKind;
use secrecy_cli::{exit, gnuplot_script, run, write_csv, Args, CliError, ExperimentSpec};

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let seed_env = std::env::var("SEED").ok();
    let spec = ExperimentSpec::from_args(args, seed_env.as_deref())?;
    let outcome = run(&spec)?;
    match &spec.out {
        Some(path) => {
            write_csv(BufWriter::new(File::create(path)?), &outcome.rows)?;
            if spec.plot {
                let xlabel = match spec.kind {
                    ExperimentKind::PowerSweep => "P (dB)",
                    ExperimentKind::EpsilonSweep => "epsilon",
                    ExperimentKind::Convergence => "iteration",
                    ExperimentKind::Validate => "value",
                };
                let names: Vec<&str> = spec.methods.iter().map(|m| m.name()).collect();
                std::fs::write(path.with_extension("gp"), gnuplot_script(path, xlabel, &names))?;
            }
        }
        None => write_csv(io::stdout().lock(), &outcome.rows)?,
    }
    if !outcome.passed {
        for row in outcome.rows.iter().filter(|r| r.status != "pass") {
            eprintln!("contract failed: {} trial {}: {}", row.method, row.trial, row.status);
        }
        return Ok(exit::CONTRACT_FAILURE);
    }
    Ok(exit::SUCCESS)
}
