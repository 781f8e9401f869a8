use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnsfv::app::{self, AppError};
use cnsfv::config::{MeshSource, RunConfig};

#[derive(Parser)]
#[command(name = "cnsfv", version, about = "Implicit upwind FV/CR solver for barotropic compressible Navier-Stokes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write the ledger, VTK files and a summary.
    Run(Common),
    /// Run a mesh-refinement study and tabulate convergence orders.
    Study(Common),
    /// Run the quick invariant suite.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gmsh MSH 2.2 mesh, overriding the configuration.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-threaded linear algebra for bitwise reproducible output.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, AppError> {
        let mut cfg = match &self.config {
            Some(path) => app::load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(mesh) = &self.mesh {
            cfg.mesh = MeshSource::File(mesh.clone());
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<bool, AppError> {
    match cli.command {
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let s = app::run(&cfg)?;
            println!(
                "{} steps, error functional {:.4e}, max mass drift {:.2e}, written to {}",
                s.steps,
                s.error_functional,
                s.invariants.max_mass_drift,
                cfg.out_dir.display()
            );
            Ok(true)
        }
        Command::Study(c) => {
            let cfg = c.resolve()?;
            let table = app::study(&cfg)?;
            print!("{}", app::study_csv(&table));
            println!("theoretical rate {}", table.theoretical_rate);
            Ok(table.monotone())
        }
        Command::Check(c) => {
            let cfg = c.resolve()?;
            let results = app::check(&cfg)?;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
