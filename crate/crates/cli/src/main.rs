use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use projfilter::experiment::{self, ExperimentConfig, OUT_DIR_ENV, PRESET_NAMES};
use projfilter::Error;

/// Projection-filter feedback experiments for QND-measured spin systems.
#[derive(Parser, Debug)]
#[command(name = "projfilter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an ensemble and write CSV outputs.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configuration and audit the controller assumptions.
    Verify {
        #[command(flatten)]
        source: Source,
    },
    /// Print the names of the bundled presets.
    ListPresets,
    /// Print a preset as a TOML configuration.
    ShowPreset { name: String },
}

#[derive(Args, Debug)]
struct Source {
    /// TOML configuration file.
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Use a bundled preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Override a value, e.g. `--set controller.alpha=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let base = match (&self.config, &self.preset) {
            (Some(path), _) => experiment::load_config(path)?,
            (None, Some(name)) => experiment::preset(name)?,
            (None, None) => return Err(Error::Config("give a config file or --preset".into())),
        };
        experiment::apply_overrides(&base, &self.overrides)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidConfiguration(_)
        | Error::Dimension { .. }
        | Error::Domain(_) => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListPresets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        Command::ShowPreset { name } => {
            print!("{}", experiment::to_toml(&experiment::preset(&name)?)?);
        }
        Command::Verify { source } => {
            let config = source.load()?;
            print!("{}", experiment::verify(&config)?.render());
        }
        Command::Run { source, out } => {
            let config = source.load()?;
            let dir = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
            let outcome = experiment::run(&config, &source.overrides, dir.as_deref())?;
            let s = &outcome.summary;
            println!(
                "{} trajectories, convergence fraction {:.4}, median exponent {:.4}",
                s.trajectory_count,
                s.convergence_fraction,
                s.median_exponent()
            );
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.warnings > 0 {
                eprintln!(
                    "warning: {} trajectories stopped early, see manifest.json",
                    outcome.warnings
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
