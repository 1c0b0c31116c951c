use std::error::Error;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pauli_gfmc::experiments::{self, report, FitWindow};
use pauli_gfmc::model::Config;
use pauli_gfmc::oracle;

#[derive(Parser)]
#[command(version, about = "Green's function Monte Carlo for fermions in a square well")]
struct Cli {
    /// Replace existing output files.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run at the configured Δ.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `run.seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every Δ in the list and extrapolates to Δ = 0.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = experiments::DEFAULT_DELTAS)]
        deltas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// `auto`, `all`, or a maximum Δ.
        #[arg(long, default_value = "auto", value_parser = parse_window)]
        window: FitWindow,
    },
    /// Fits an existing sweep CSV and prints the result as JSON.
    Extrapolate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "auto", value_parser = parse_window)]
        window: FitWindow,
    },
    /// Prints the exact single-particle levels and the N-fermion ground energy.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_window(s: &str) -> Result<FitWindow, String> {
    match s {
        "auto" => Ok(FitWindow::Auto),
        "all" => Ok(FitWindow::All),
        other => other
            .parse::<f64>()
            .map(FitWindow::UpTo)
            .map_err(|_| format!("expected `auto`, `all` or a number, got `{other}`")),
    }
}

fn load(path: &PathBuf) -> Result<Config, Box<dyn Error>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(Config::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

fn execute(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            let started = report::now();
            let result = experiments::run_single(&cfg.system, &cfg.run)?;
            report::write_run(&out, &report::Manifest::new(cfg, started), &result, cli.overwrite)?;
            println!("energy {} ± {}", result.energy, result.stderr);
        }
        Command::Sweep {
            config,
            deltas,
            out,
            window,
        } => {
            let cfg = load(&config)?;
            let started = report::now();
            let sweep = experiments::sweep_delta(&cfg.system, &cfg.run, &deltas)?;
            for (delta, reason) in &sweep.failures {
                eprintln!("Δ = {delta}: {reason}");
            }
            let fit = experiments::extrapolate_linear(&sweep.rows, window);
            if let Err(e) = &fit {
                eprintln!("extrapolation skipped: {e}");
            }
            let mut manifest = report::Manifest::new(cfg, started);
            manifest.deltas = deltas;
            report::write_sweep(&out, &manifest, &sweep.runs, &sweep.rows, fit.as_ref().ok(), cli.overwrite)?;
            print!("{}", report::sweep_csv(&sweep.rows));
            if let Ok(fit) = fit {
                println!("E(Δ→0) = {} ± {}", fit.intercept, fit.intercept_stderr);
            }
        }
        Command::Extrapolate { input, window } => {
            let text = fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
            let rows = report::parse_sweep_csv(&text)?;
            let fit = experiments::extrapolate_linear(&rows, window)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
        }
        Command::Oracle { config } => {
            let cfg = load(&config)?;
            let levels = oracle::levels_for(&cfg.system)?;
            print!("{}", levels.to_csv());
            let energy = oracle::fermi_ground_energy(&levels, cfg.system.n_particles)?;
            println!("# ground energy of {} fermions: {energy}", cfg.system.n_particles);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
