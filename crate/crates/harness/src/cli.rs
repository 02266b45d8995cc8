//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 trial or
//! protocol failure.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use live_core::geometry::VectorMap;
use live_core::planner::PlannerMode;
use live_core::simulator::{plan_for, run_trial_on, Scenario, TrajectoryLog, TrialResult};
use live_core::worlds::{apartment_map, apartment_scenario};

use crate::batch::{rows_csv, run_batch, Cell, ExperimentMatrix, TrialRecord};
use crate::net::{run_client, serve, DEFAULT_TIMEOUT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "live", version, about = "Multi-robot visual search experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the coverage plan for a scenario: one `robot x y theta` line per viewpoint.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<PlannerMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trial in-process.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<PlannerMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of an experiment matrix.
    Batch {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coordinate a networked trial; one `client` per robot must connect.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        listen: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<PlannerMode>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seconds to wait for a peer before aborting.
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
        timeout: u64,
    },
    /// Drive one robot of a networked trial.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        robot: String,
        /// Scenario the server runs; supplies this robot's spec and the world it senses.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
        timeout: u64,
    },
    /// Write the built-in apartment map, a sample scenario and the full experiment matrix.
    Worlds {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn load_scenario(path: &Path, seed: Option<u64>, mode: Option<PlannerMode>) -> Result<(Scenario, Arc<VectorMap>), String> {
    let mut s = Scenario::load(path).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(mode) = mode {
        s.mode = mode;
    }
    let map = VectorMap::load(&s.map_path).map_err(|e| e.to_string())?;
    Ok((s, Arc::new(map)))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_trial(out: &Path, s: &Scenario, result: &TrialResult, log: &TrajectoryLog) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write(&out.join("trajectory.csv"), log.to_csv())?;
    write(
        &out.join("result.json"),
        serde_json::to_string_pretty(result).expect("result serialises"),
    )?;
    let record = TrialRecord {
        cell: Cell {
            mode: s.mode,
            ic: 0,
            layout: 0,
            seed: s.seed,
        },
        outcome: Ok(result.clone()),
    };
    // A lone trial has no matrix coordinates.
    let mut row = record.csv_row();
    row[1].clear();
    row[2].clear();
    let csv = rows_csv([row]);
    write(&out.join("results.csv"), csv)
}

fn summary(result: &TrialResult) -> String {
    format!(
        "{}: {}/{} targets, path {:.2} m, {} ticks",
        result.failure_mode,
        result.targets_found(),
        result.targets().count(),
        result.total_path_length(),
        result.ticks
    )
}

fn execute(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::Plan {
            scenario,
            mode,
            seed,
            out,
        } => {
            let (s, map) = load_scenario(&scenario, seed, mode)?;
            let plan = plan_for(&s, &map).map_err(|e| e.to_string())?;
            match out {
                Some(path) => write(&path, plan.to_plan_file())?,
                None => print!("{}", plan.to_plan_file()),
            }
            log::info!(
                "{} viewpoints, {:.1} m planned, {:.3} covered",
                plan.viewpoint_count(),
                plan.total_length(),
                plan.covered_fraction
            );
            Ok(EXIT_OK)
        }
        Command::Run {
            scenario,
            seed,
            mode,
            out,
        } => {
            let (s, map) = load_scenario(&scenario, seed, mode)?;
            let (result, log) = run_trial_on(&s, map).map_err(|e| e.to_string())?;
            write_trial(&out, &s, &result, &log)?;
            println!("{}", summary(&result));
            Ok(EXIT_OK)
        }
        Command::Batch { matrix, out } => {
            let m = ExperimentMatrix::load(&matrix).map_err(|e| e.to_string())?;
            let outcome = run_batch(&m, &out).map_err(|e| e.to_string())?;
            for s in &outcome.report.modes {
                println!(
                    "{}: success {:.3} over {} trials, mean path {:.2} m",
                    s.mode,
                    s.success.value(),
                    s.trials,
                    s.path_len_total.mean
                );
            }
            Ok(EXIT_OK)
        }
        Command::Serve {
            scenario,
            listen,
            seed,
            mode,
            out,
            timeout,
        } => {
            let (s, map) = load_scenario(&scenario, seed, mode)?;
            let listener = TcpListener::bind(&listen).map_err(|e| format!("{listen}: {e}"))?;
            log::info!("listening on {}", listener.local_addr().map_err(|e| e.to_string())?);
            let served = serve(Arc::new(s.clone()), map, &listener, Duration::from_secs(timeout))
                .map_err(|e| e.to_string())?;
            if let Some(out) = out {
                write_trial(&out, &s, &served.result, &served.log)?;
            }
            println!("{}", summary(&served.result));
            Ok(if served.result.failure_mode == live_core::simulator::FailureMode::TransportFailure {
                EXIT_FAILURE
            } else {
                EXIT_OK
            })
        }
        Command::Client {
            connect,
            robot,
            scenario,
            timeout,
        } => {
            let (s, map) = load_scenario(&scenario, None, None)?;
            let summary = run_client(connect.as_str(), &robot, &s, map, Duration::from_secs(timeout))
                .map_err(|e| e.to_string())?;
            log::info!("{robot}: {} ticks", summary.ticks);
            Ok(EXIT_OK)
        }
        Command::Worlds { out, seeds } => {
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write_worlds(&out, seeds)?;
            Ok(EXIT_OK)
        }
    }
}

/// The apartment map, one sample scenario and the experiment matrix, with
/// paths relative to `dir`.
pub fn write_worlds(dir: &Path, seeds: Vec<u64>) -> Result<(), String> {
    let map_path = dir.join("apartment.map");
    apartment_map()
        .save(&map_path)
        .map_err(|e| format!("{}: {e}", map_path.display()))?;
    let sample = apartment_scenario("apartment.map", 0, 0, PlannerMode::LidarCPPLive, 0);
    write(&dir.join("apartment_scenario.json"), sample.to_json() + "\n")?;
    let matrix = ExperimentMatrix::apartment("apartment.map", seeds);
    write(&dir.join("apartment_matrix.json"), matrix.to_json() + "\n")
}
