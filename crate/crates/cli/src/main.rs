use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use optomech::analytic::{boundary, regime_warning, steady_negativity, thermal_occupation};
use optomech::checks::run_checks;
use optomech::config::Scenario;
use optomech::figures::{ids, run_figure};
use optomech::precision::PrecisionPolicy;
use optomech::scenario::{run_scenario, RunOptions};
use optomech::sweep::{run_sweep, SweepConfig};
use optomech::Error;

#[derive(Parser)]
#[command(name = "optomech", version, about = "Entanglement dynamics of blue-detuned cavity optomechanics")]
struct Cli {
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// double, ext:<bits> or adaptive; overrides the config.
    #[arg(long, global = true)]
    precision: Option<PrecisionPolicy>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one scenario file.
    Simulate { config: PathBuf },
    /// Run a parameter sweep file.
    Sweep { config: PathBuf },
    /// Reproduce a bundled figure.
    Figure {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(ids()))]
        id: String,
    },
    /// Steady-state log-negativity in the averaged regime.
    Analytic {
        #[arg(long)]
        j: f64,
        #[arg(long)]
        gn: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Mechanical damping, used only for the regime warning.
        #[arg(long)]
        gamma_m: Option<f64>,
    },
    /// Damping rate at which steady entanglement vanishes.
    Boundary {
        #[arg(long)]
        j: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Bose occupation of a mode at ordinary frequency `freq_hz`.
    Occupation {
        #[arg(long)]
        temp_k: f64,
        #[arg(long)]
        freq_hz: f64,
    },
    /// Run the invariant suite.
    Check {
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let opts = RunOptions { precision: cli.precision };
    match cli.command {
        Command::Simulate { config } => {
            let scn = Scenario::from_path(&config)?;
            let rep = run_scenario(&scn, &cli.out_dir, &opts)?;
            println!("{}", rep.csv.display());
            if let Some(e) = rep.error {
                return Err(e.into());
            }
        }
        Command::Sweep { config } => {
            let mut cfg = SweepConfig::from_path(&config)?;
            if cli.threads > 0 {
                cfg.threads = Some(cli.threads);
            }
            let rep = run_sweep(&cfg, &cli.out_dir, &opts)?;
            println!("{}", rep.csv.display());
            if rep.failed() > 0 {
                return Err(Failure::Numerical(format!("{} of {} sweep points failed", rep.failed(), rep.points.len())));
            }
        }
        Command::Figure { id } => {
            let rep = run_figure(&id, &cli.out_dir, &opts)?;
            println!("{}", rep.dir.display());
            if rep.failures() > 0 {
                return Err(Failure::Numerical(format!("{} runs in {id} failed", rep.failures())));
            }
        }
        Command::Analytic { j, gn, kappa, gamma_m } => {
            if let Some(w) = gamma_m.and_then(|g| regime_warning(g, kappa)) {
                log::warn!("{w}");
            }
            let s = steady_negativity(j, gn, kappa)?;
            print(json!({ "j": j, "gamma_n": gn, "kappa": kappa, "e_n": s.e_n, "negativity_raw": s.raw }));
        }
        Command::Boundary { j, kappa } => {
            let b = boundary(j, kappa)?;
            print(json!({ "j": b.j, "gamma_n": b.gamma_n, "relative_offset": b.relative_offset }));
        }
        Command::Occupation { temp_k, freq_hz } => {
            let n = thermal_occupation(temp_k, std::f64::consts::TAU * freq_hz)?;
            print(json!({ "temp_k": temp_k, "freq_hz": freq_hz, "n_th": n }));
        }
        Command::Check { samples } => {
            let results = run_checks(cli.seed, samples);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Failure::Numerical(format!("{failed} checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
