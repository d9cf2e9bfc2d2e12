//! `auvsim`: run, compare and inspect formation scenarios.
//!
//! Exit status is 0 on success, 1 for bad arguments or a scenario that
//! fails to parse or validate, and 2 when a simulation aborts or output
//! cannot be written.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auv_formation::flow::FlowField;
use auv_formation::io::{
    compare_runs, export_comparison, export_flow_grid, export_results, parse_scenario, summarize,
    RunSummary,
};
use auv_formation::sim::{run, Scenario, AXIS_NAMES};
use auv_formation::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "auvsim", version, about = "AUV formation tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and export logs and metrics.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the step size, s.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run the scenario and its first-order baseline side by side.
    Compare {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sample the current on a 1 m grid over the workspace.
    FlowGrid {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Sample times, s.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        t: Vec<f64>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

enum Failure {
    Input(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::Invalid(_) => Failure::Input(e),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<Scenario<f64>, Failure> {
    parse_scenario(path).map_err(Failure::Input)
}

fn print_metrics(label: &str, summary: &RunSummary) {
    match summary.convergence_time {
        Some(t) => println!("{label}: converged at t = {t:.2} s"),
        None => println!("{label}: did not converge; statistics cover the whole run"),
    }
    let Some(m) = &summary.metrics else { return };
    println!(
        "{:<5} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "axis", "speed min", "speed max", "speed RMSE", "pos min", "pos max", "pos RMSE"
    );
    for (a, name) in AXIS_NAMES.iter().enumerate() {
        let s = &m.formation[a];
        println!(
            "{:<5} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>12.4}",
            name,
            s.speed.min,
            s.speed.max,
            s.speed.rmse,
            s.position.min,
            s.position.max,
            s.position.rmse
        );
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            scenario,
            output,
            seed,
            dt,
        } => {
            let mut sc = load(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            if let Some(dt) = dt {
                sc.dt = dt;
                sc.validate().map_err(Failure::Input)?;
            }
            let log = run(&sc)?;
            let summary = summarize(&log, sc.convergence_threshold)?;
            export_results(&log, &summary, &output)?;
            print_metrics("formation", &summary);
            if let Some(abort) = &log.abort {
                return Err(Failure::Runtime(format!(
                    "run aborted at t = {} s: {}",
                    abort.t, abort.message
                )));
            }
            Ok(())
        }
        Command::Compare { scenario, output } => {
            let sc = load(&scenario)?;
            let c = compare_runs(&sc)?;
            export_results(&c.proposed, &c.proposed_summary, &output.join("proposed"))?;
            export_results(&c.baseline, &c.baseline_summary, &output.join("baseline"))?;
            export_comparison(&c, &output)?;
            print_metrics("proposed", &c.proposed_summary);
            print_metrics("baseline", &c.baseline_summary);
            let r = c.rmse_ratio();
            println!(
                "position RMSE ratio from t = {:.2} s (proposed / baseline): x {:.3}, y {:.3}, z {:.3}",
                c.window_start, r[0], r[1], r[2]
            );
            println!(
                "control sign flips: proposed {}, baseline {}",
                c.proposed_chatter, c.baseline_chatter
            );
            for (label, log) in [("proposed", &c.proposed), ("baseline", &c.baseline)] {
                if let Some(a) = &log.abort {
                    return Err(Failure::Runtime(format!(
                        "{label} run aborted at t = {} s: {}",
                        a.t, a.message
                    )));
                }
            }
            Ok(())
        }
        Command::FlowGrid {
            scenario,
            output,
            t,
        } => {
            let sc = load(&scenario)?;
            let field =
                FlowField::new(sc.flow.params, sc.flow.layers.clone()).map_err(Failure::Input)?;
            let n = export_flow_grid(&field, &sc.workspace, &t, &output)?;
            println!("wrote {n} grid samples to {}", output.display());
            Ok(())
        }
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            println!(
                "{}: valid ({} vehicles, {} steps of {} s)",
                scenario.display(),
                sc.vehicles.len(),
                sc.step_count(),
                sc.dt
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
