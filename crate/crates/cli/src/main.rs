use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use molodensky::experiments::{eoc_csv, run_experiment, ExperimentConfig, ExperimentId};
use molodensky::Error;

#[derive(Parser)]
#[command(name = "molodensky", version, about = "Boundary element experiments for the Molodensky problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model problem (plain or restarted) or the linearized sphere benchmark.
    Solve {
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// 2D energy and Hessian benchmarks on the square.
    Bench2d {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// 3D Hessian benchmark on the cube.
    Bench3d {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Smoother property constants on a sphere spectrum.
    SmootherReport {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Appends experimental orders of convergence to a CSV with a `dof` column.
    Eoc {
        csv: PathBuf,
        /// Column holding the errors.
        #[arg(long, default_value = "error")]
        column: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn experiment(config: PathBuf, output: Option<PathBuf>, allowed: &[ExperimentId]) -> Result<(), Error> {
    let mut c = ExperimentConfig::load(&config)?;
    if !allowed.contains(&c.experiment) {
        let names: Vec<_> = allowed.iter().map(|a| a.name()).collect();
        return Err(Error::Config(format!("experiment {} not handled here; expected one of {names:?}", c.experiment)));
    }
    if let Some(o) = output {
        c.output = o;
    }
    let out = run_experiment(&c)?;
    print!("{}", out.summary);
    println!("output written to {}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { config, output } => experiment(
            config,
            output,
            &[ExperimentId::ModelProblem, ExperimentId::ModelProblemRestarted, ExperimentId::BenchSphereLinearized],
        ),
        Command::Bench2d { config, output } => experiment(config, output, &[ExperimentId::Bench2d]),
        Command::Bench3d { config, output } => experiment(config, output, &[ExperimentId::Bench3dCube]),
        Command::SmootherReport { config, output } => experiment(config, output, &[ExperimentId::SmootherReport]),
        Command::Eoc { csv, column } => std::fs::read_to_string(&csv)
            .map_err(Error::from)
            .and_then(|text| eoc_csv(&text, &column))
            .map(|out| print!("{out}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
