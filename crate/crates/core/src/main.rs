use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qtnflow::cli::config::{parse_config, parse_override, preset_text, PRESETS};
use qtnflow::cli::{run_experiment, RunConfig};
use qtnflow::Error;

#[derive(Parser)]
#[command(name = "qtnflow", version, about = "Compressed PDE time stepping with MPS/MPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a preset name.
    Run {
        config: String,
        /// Output directory; defaults to `output.dir`, then `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        config: String,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Built-in presets.
    Presets {
        #[command(subcommand)]
        command: PresetCommand,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    /// List preset names.
    List,
}

/// Reads `source` as a file path, falling back to a preset name.
fn load(source: &str, overrides: &[String]) -> qtnflow::Result<RunConfig> {
    let overrides = overrides.iter().map(|o| parse_override(o)).collect::<qtnflow::Result<Vec<_>>>()?;
    let path = Path::new(source);
    let text = if path.exists() {
        std::fs::read_to_string(path)?
    } else if let Some(text) = preset_text(source) {
        text.to_string()
    } else {
        return Err(Error::Config(format!("`{source}` is neither a file nor a preset")));
    };
    parse_config(&text, &overrides)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::InvalidConfig { .. } | Error::Syntax { .. } | Error::Config(_) => ExitCode::from(2),
        Error::NumericalFailure { .. } => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, overrides } => load(&config, &overrides).and_then(|c| {
            let dir = out
                .or_else(|| c.output.dir.clone())
                .unwrap_or_else(|| Path::new("runs").join(&c.name));
            let m = run_experiment(&c, &dir)?;
            let r = m.results.as_ref().expect("successful run has results");
            println!("{}: K = {}, dt = {:e}, max bond {}", c.name, m.num_steps, m.dt, r.max_bond);
            println!("  final rel l2 vs euler {:e}, vs rk45 {:e}", r.final_rel_l2_vs_euler, r.final_rel_l2_vs_rk45);
            if let Some(b) = r.bound_holds {
                println!("  error bound holds: {b}");
            }
            println!("  artifacts in {}", dir.display());
            Ok(())
        }),
        Command::Validate { config, overrides } => load(&config, &overrides).map(|c| print!("{}", c.to_config_text())),
        Command::Presets { command: PresetCommand::List } => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
