use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irksindy_cli::presets::{preset_raw, preset_text, PRESETS};
use irksindy_cli::run::{run_compare, run_discover, run_generate, run_simulate, tableau_csv};
use irksindy_cli::{CliError, RawConfig, RunConfig};

#[derive(Parser)]
#[command(name = "irksindy", version, about = "Sparse ODE discovery with Gauss implicit Runge-Kutta predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where settings come from; later sources win.
#[derive(Args, Default)]
struct Source {
    /// Start from a checked-in preset.
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` file, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single `key=value` override, applied last (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Gauss-Legendre Butcher tableau as CSV.
    Tableau {
        #[arg(long)]
        stages: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a reference model to a trajectory CSV.
    Generate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        t1: Option<f64>,
        /// Comma-separated initial state.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify a sparse model from a trajectory.
    Discover {
        #[command(flatten)]
        source: Source,
        /// Trajectory CSV; generated from `model` when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Integrate a discovered model.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Simulate discovered and reference models and report metrics.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Print a preset, or list them.
    Preset {
        #[arg(long, required_unless_present = "list")]
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build(source: &Source, flags: &[(&str, Option<String>)]) -> Result<RunConfig, CliError> {
    let mut raw = match &source.preset {
        Some(name) => preset_raw(name)?,
        None => RawConfig::default(),
    };
    if let Some(path) = &source.config {
        raw.merge(RawConfig::load(path)?);
    }
    for (key, value) in flags {
        if let Some(v) = value {
            raw.set(key, v)?;
        }
    }
    for pair in &source.set {
        raw.set_pair(pair)?;
    }
    raw.apply_env()?;
    RunConfig::from_raw(&raw)
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tableau { stages, out } => write_or_print(&out, &tableau_csv(stages)?),
        Command::Generate { source, model, m, t0, t1, x0, sigma, seed, out } => {
            let flags = [
                ("model", model),
                ("m", m.map(|v| v.to_string())),
                ("t0", t0.map(|v| v.to_string())),
                ("t1", t1.map(|v| v.to_string())),
                ("x0", x0),
                ("sigma", sigma.map(|v| v.to_string())),
                ("seed", seed.map(|v| v.to_string())),
                ("data", path(&out)),
            ];
            let cfg = build(&source, &flags)?;
            let ds = run_generate(&cfg)?;
            match &cfg.data {
                Some(p) => eprintln!("wrote {} samples to {}", ds.times().len(), p.display()),
                None => print!("{}", ds.to_csv()),
            }
            Ok(())
        }
        Command::Discover { source, data, method, out_dir } => {
            let flags = [("data", path(&data)), ("method", method), ("out_dir", path(&out_dir))];
            let cfg = build(&source, &flags)?;
            let (model, paths) = run_discover(&cfg)?;
            print!("{}", model.summary(""));
            eprintln!("wrote {}, {}, {}", paths.coefficients.display(), paths.history.display(), paths.summary.display());
            if model.all_terms_eliminated {
                eprintln!("warning: all library terms were eliminated");
            }
            Ok(())
        }
        Command::Simulate { source, coefficients, out_dir } => {
            let flags = [("coefficients", path(&coefficients)), ("out_dir", path(&out_dir))];
            let cfg = build(&source, &flags)?;
            let (ds, p) = run_simulate(&cfg)?;
            eprintln!("wrote {} samples to {}", ds.times().len(), p.display());
            Ok(())
        }
        Command::Compare { source, coefficients, out_dir } => {
            let flags = [("coefficients", path(&coefficients)), ("out_dir", path(&out_dir))];
            let cfg = build(&source, &flags)?;
            let cmp = run_compare(&cfg)?;
            print!("{}", cmp.metrics.to_text());
            eprintln!("wrote {}", cmp.metrics_path.display());
            Ok(())
        }
        Command::Preset { name, list, out } => {
            if list {
                for (n, _) in PRESETS {
                    println!("{n}");
                }
                return Ok(());
            }
            let name = name.expect("clap enforces --name without --list");
            write_or_print(&out, preset_text(&name)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
