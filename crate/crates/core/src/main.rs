use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use svoc_core::runner::acceptance::{canonical_suite, check_acceptance, run_suite};
use svoc_core::runner::output::{write_metrics, write_run, RunMetrics};
use svoc_core::runner::{run_scenario, ControllerKind, RunResult, Scenario};
use svoc_core::SimError;

const EXIT_SIM: u8 = 1;
const EXIT_ACCEPTANCE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

/// Seconds averaged for the summary figures.
const SUMMARY_TAIL: f64 = 0.5;

#[derive(Parser)]
#[command(name = "svoc-sim", version, about = "Grid-forming inverter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write CSV, event log and summary.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's controller.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Override the plant step, seconds. Must divide the controller period.
        #[arg(long = "dt-plant")]
        dt_plant: Option<f64>,
        /// Start the plant at rest instead of at the grid's no-load steady state.
        #[arg(long = "seed-free")]
        seed_free: bool,
    },
    /// Run a scenario suite and grade it.
    Check {
        #[arg(long, value_enum, default_value_t = SuiteName::Canonical)]
        suite: SuiteName,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the canonical scenarios.
    ListScenarios,
    /// Print one canonical scenario as TOML.
    Show { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Canonical,
}

fn exit_code(e: &SimError) -> u8 {
    match e {
        SimError::AtTime { source, .. } => exit_code(source),
        SimError::Config(_) | SimError::OverlappingEvents { .. } | SimError::MissingScenario(_) => {
            EXIT_CONFIG
        }
        _ => EXIT_SIM,
    }
}

fn fail(e: SimError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn write_outputs(runs: &[RunResult], out: &Path) -> Result<(), SimError> {
    let mut metrics = Vec::new();
    for r in runs {
        if metrics
            .iter()
            .any(|m: &RunMetrics| m.name == r.scenario.name)
        {
            continue;
        }
        let files = write_run(r, out)?;
        eprintln!("wrote {}", files.csv.display());
        metrics.push(RunMetrics::from_run(r, SUMMARY_TAIL));
    }
    write_metrics(&metrics, out)?;
    Ok(())
}

fn run(
    path: &Path,
    out: &Path,
    controller: Option<ControllerKind>,
    dt_plant: Option<f64>,
    seed_free: bool,
) -> Result<ExitCode, SimError> {
    let mut s = Scenario::load(path)?;
    if let Some(c) = controller {
        s.controller = c;
    }
    if let Some(dt) = dt_plant {
        s.dt_plant = dt;
    }
    s.cold_start |= seed_free;
    s.validate()?;
    let r = run_scenario(&s)?;
    write_outputs(std::slice::from_ref(&r), out)?;
    let m = RunMetrics::from_run(&r, SUMMARY_TAIL);
    println!(
        "{}: P {:.1} {:.1} {:.1} W, Q {:.1} {:.1} {:.1} var, peak irms {:.2} {:.2} {:.2} A",
        m.name,
        m.p_tail[0],
        m.p_tail[1],
        m.p_tail[2],
        m.q_tail[0],
        m.q_tail[1],
        m.q_tail[2],
        m.peak_irms[0],
        m.peak_irms[1],
        m.peak_irms[2]
    );
    Ok(match &r.error {
        Some(e) => {
            eprintln!("simulation stopped: {e}");
            ExitCode::from(EXIT_SIM)
        }
        None => ExitCode::SUCCESS,
    })
}

fn check(out: &Path) -> Result<ExitCode, SimError> {
    let runs = run_suite(&canonical_suite())?;
    write_outputs(&runs, out)?;
    let report = check_acceptance(&runs)?;
    print!("{report}");
    std::fs::write(out.join("acceptance.txt"), report.to_string())?;
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ACCEPTANCE)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            controller,
            dt_plant,
            seed_free,
        } => run(&scenario, &out, controller, dt_plant, seed_free),
        Command::Check {
            suite: SuiteName::Canonical,
            out,
        } => check(&out),
        Command::ListScenarios => {
            let mut seen = Vec::new();
            for s in canonical_suite() {
                if !seen.contains(&s.name) {
                    println!(
                        "{:<20} {:>4.1} s  {}",
                        s.name,
                        s.duration,
                        s.controller.as_str()
                    );
                    seen.push(s.name);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Show { name } => match canonical_suite().into_iter().find(|s| s.name == name) {
            Some(s) => {
                print!("{}", s.to_toml());
                Ok(ExitCode::SUCCESS)
            }
            None => Err(SimError::MissingScenario(name)),
        },
    };
    result.unwrap_or_else(fail)
}
