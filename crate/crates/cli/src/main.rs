use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use spinphase::runner::{run_scenario, RunError, RunOptions, RunOutput};
use spinphase::sweep::{sweep, sweep_csv, SweepConfig};
use spinphase::validation::run_all;

/// Exact spin evolution and nonadiabatic geometric phases in rotating and
/// general magnetic fields.
#[derive(Debug, Parser)]
#[command(name = "spinphase", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Time step, overriding the scenario grid.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Number of cycles to emit (field periods when not cyclic).
    #[arg(long, global = true)]
    periods: Option<f64>,
    /// Seed for the randomized validation draws.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Cyclicity tolerance (ratio tolerance, axis closure or sweep residual).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Phases, oracle cross-checks, report and CSV files for a scenario.
    Run { scenario: PathBuf },
    /// Trajectory CSV only.
    Trajectory { scenario: PathBuf },
    /// Field parameters with prescribed precession-rate ratios.
    Sweep { config: PathBuf },
    /// Run the self-validation checks.
    Validate,
}

const EXIT_IO: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_TRUST: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let code = match &cli.command {
        Command::Run { scenario } => run(scenario, &cli.common, false),
        Command::Trajectory { scenario } => run(scenario, &cli.common, true),
        Command::Sweep { config } => run_sweep(config, &cli.common),
        Command::Validate => validate(cli.common.seed),
    };
    eprintln!("wall time: {:.3} s", start.elapsed().as_secs_f64());
    ExitCode::from(code)
}

fn run(path: &Path, common: &Common, trajectory_only: bool) -> u8 {
    let opts = RunOptions { dt: common.dt, periods: common.periods, tolerance: common.tolerance, trajectory_only };
    let result = run_scenario(path, &opts).and_then(|out| {
        let written = if trajectory_only { vec![out.write_trajectory_to(&common.out_dir)?] } else { out.write_to(&common.out_dir)? };
        Ok((out, written))
    });
    match result {
        Ok((out, written)) => {
            for w in &out.report.warnings {
                eprintln!("warning: {w}");
            }
            print_summary(&out);
            for path in written {
                println!("wrote {}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn print_summary(out: &RunOutput) {
    let Some(p) = &out.report.phases else { return };
    let opt = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{v:.12}"));
    println!("delta    = {:.12}", p.delta);
    println!("beta     = {:.12}", p.beta);
    println!("gamma    = {:.12}", p.gamma);
    println!("omega_u  = {}", opt(p.omega_u));
    println!("omega_v  = {}", opt(p.omega_v));
    println!("fidelity = {:.15}", p.fidelity);
    for (name, value) in &out.report.oracle {
        println!("oracle {name} = {value:.3e}");
    }
}

fn run_sweep(path: &Path, common: &Common) -> u8 {
    let mut cfg = match SweepConfig::from_path(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: invalid sweep config: {e}");
            return EXIT_SCHEMA;
        }
    };
    if let Some(t) = common.tolerance {
        cfg.tolerance = t;
    }
    let points = match sweep(&cfg) {
        Ok(points) => points,
        Err(e) => {
            eprintln!("error: invalid sweep config: {e}");
            return EXIT_SCHEMA;
        }
    };
    let body = sweep_csv(&points);
    let target = common.out_dir.join("sweep.csv");
    let written = std::fs::create_dir_all(&common.out_dir)
        .and_then(|_| tempfile::NamedTempFile::new_in(&common.out_dir))
        .and_then(|mut f| {
            use std::io::Write;
            f.write_all(body.as_bytes())?;
            f.persist(&target).map_err(|e| e.error)
        });
    match written {
        Ok(_) => {
            print!("{body}");
            eprintln!("{} point(s); wrote {}", points.len(), target.display());
            0
        }
        Err(e) => {
            eprintln!("error: {}", RunError::Io(e));
            EXIT_IO
        }
    }
}

fn validate(seed: u64) -> u8 {
    let results = run_all(seed);
    let mut ok = true;
    for r in &results {
        println!("{}", r.summary());
        ok &= r.passed();
    }
    let passed = results.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} checks passed (seed {seed})", results.len());
    if ok {
        0
    } else {
        EXIT_TRUST
    }
}
