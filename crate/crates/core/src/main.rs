use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nschs::diagnostics::adsorption_statistic;
use nschs::io::config::{load_config, parse_config, RunConfig, VALIDATION_SAMPLES};
use nschs::io::driver::{
    converge, describe, perturb, run_simulation, sweep_eps, sweep_omega, DriverError,
};
use nschs::params::validate_assumptions;

#[derive(Parser)]
#[command(
    name = "nschs",
    version,
    about = "Navier-Stokes / sixth-order Cahn-Hilliard / surfactant solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print the assumption report.
    Validate { config: PathBuf },
    /// Run a configuration to t_end.
    Run {
        config: PathBuf,
        /// Output directory (defaults to run.output_dir).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Regularized runs over a strictly decreasing list of eps.
    SweepEps {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
    /// Runs over a strictly decreasing list of penalty weights.
    SweepOmega {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
    },
    /// Grid and time-step self-convergence study.
    Converge { config: PathBuf },
    /// Twin runs with a perturbed initial phase field.
    Perturb {
        config: PathBuf,
        #[arg(long)]
        delta: f64,
    },
}

fn load(path: &Path) -> Result<RunConfig, DriverError> {
    Ok(parse_config(path)?)
}

fn validate(path: &Path) -> Result<i32, DriverError> {
    let c = load_config(path)?;
    c.check_run_section()?;
    let params = c.model_params()?;
    let report = validate_assumptions(&params, VALIDATION_SAMPLES)
        .map_err(nschs::io::config::ConfigError::from)?;
    print!("{report}");
    if !report.all_passed() {
        return Ok(1);
    }
    print!("{}", describe(&c)?);
    Ok(0)
}

fn run(path: &Path, output: Option<PathBuf>) -> Result<i32, DriverError> {
    let c = load(path)?;
    let dir = output.unwrap_or_else(|| c.resolve(&c.run.output_dir));
    let outcome = run_simulation(&c, Some(&dir))?;
    let sim = &outcome.simulation;
    let r = sim.record();
    println!(
        "steps {} t {} energy {:.12e} mass_phi {:.6e} mass_rho {:.6e} rho [{:.6}, {:.6}] clamp_events {}",
        sim.steps(),
        r.t,
        r.energy.total,
        r.mass_phi,
        r.mass_rho,
        r.rho_min,
        r.rho_max,
        sim.total_clamp_events()
    );
    println!(
        "min eta {:.6e} adsorption {:.6}",
        sim.min_eta(),
        adsorption_statistic(sim.state())
    );
    println!("output written to {}", dir.display());
    if let Some(t) = &outcome.trip {
        eprintln!("{t}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run { config, output } => run(&config, output),
        Command::SweepEps { config, eps } => {
            load(&config).and_then(|c| sweep_eps(&c, &eps)).map(|r| {
                print!("{r}");
                if r.any_trip().is_some() {
                    2
                } else {
                    0
                }
            })
        }
        Command::SweepOmega { config, omega } => load(&config)
            .and_then(|c| sweep_omega(&c, &omega))
            .map(|r| {
                print!("{r}");
                if r.any_trip().is_some() {
                    2
                } else {
                    0
                }
            }),
        Command::Converge { config } => load(&config).and_then(|c| converge(&c)).map(|r| {
            print!("{r}");
            if r.passed() {
                0
            } else {
                1
            }
        }),
        Command::Perturb { config, delta } => {
            load(&config).and_then(|c| perturb(&c, delta)).map(|r| {
                print!("{r}");
                0
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
