//! Experiment matrices: every (mode, initial condition, layout, seed) cell is
//! an independent trial. Results are written as one CSV row per trial plus a
//! table of aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use live_core::geometry::{Pose2, VectorMap};
use live_core::planner::PlannerMode;
use live_core::simulator::{run_trial_on, Difficulty, FailureMode, Scenario, TrialResult, WorldObject};
use live_core::worlds::{apartment_objects, apartment_scenario, initial_conditions, LAYOUTS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULTS_HEADER: [&str; 13] = [
    "mode",
    "ic",
    "layout",
    "seed",
    "success",
    "objects_found",
    "failure_mode",
    "len_robot0",
    "len_robot1",
    "len_total",
    "detect_t0",
    "detect_t1",
    "priority_count",
];

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("invalid matrix: {0}")]
    Matrix(String),
    #[error("map: {0}")]
    Map(String),
}

fn io_err(path: &Path, e: impl ToString) -> BatchError {
    BatchError::Io(path.display().to_string(), e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMatrix {
    /// Everything except start poses, objects, mode and seed.
    pub template: Scenario,
    /// One start pose per robot, per initial condition.
    pub ics: Vec<Vec<Pose2>>,
    pub layouts: Vec<Vec<WorldObject>>,
    pub modes: Vec<PlannerMode>,
    pub seeds: Vec<u64>,
}

/// Coordinates of one trial in the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub mode: PlannerMode,
    pub ic: usize,
    pub layout: usize,
    pub seed: u64,
}

impl Cell {
    pub fn stem(&self) -> String {
        format!("{}_ic{}_layout{}_seed{}", self.mode, self.ic, self.layout, self.seed)
    }
}

impl ExperimentMatrix {
    /// The built-in apartment: 3 initial conditions × 5 layouts × 3 modes.
    pub fn apartment(map_path: impl Into<PathBuf>, seeds: Vec<u64>) -> Self {
        let template = apartment_scenario(map_path, 0, 0, PlannerMode::LidarCPP, 0);
        let objects = apartment_objects();
        Self {
            template,
            ics: initial_conditions().iter().map(|ic| ic.to_vec()).collect(),
            layouts: LAYOUTS
                .iter()
                .map(|l| l.iter().map(|&k| objects[k].clone()).collect())
                .collect(),
            modes: PlannerMode::ALL.to_vec(),
            seeds,
        }
    }

    /// Reads a JSON matrix; a relative template `map_path` is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BatchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut m: ExperimentMatrix = serde_json::from_str(&text).map_err(|e| BatchError::Matrix(e.to_string()))?;
        if m.template.map_path.is_relative() {
            if let Some(dir) = path.parent() {
                m.template.map_path = dir.join(&m.template.map_path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialises")
    }

    pub fn validate(&self) -> Result<(), BatchError> {
        let n = self.template.robots.len();
        if self.ics.is_empty() || self.layouts.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return Err(BatchError::Matrix("every axis needs at least one entry".into()));
        }
        if let Some(ic) = self.ics.iter().find(|ic| ic.len() != n) {
            return Err(BatchError::Matrix(format!(
                "initial condition has {} poses for {n} robots",
                ic.len()
            )));
        }
        Ok(())
    }

    /// Cells in results order: mode, then IC, then layout, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for ic in 0..self.ics.len() {
                for layout in 0..self.layouts.len() {
                    for &seed in &self.seeds {
                        out.push(Cell { mode, ic, layout, seed });
                    }
                }
            }
        }
        out
    }

    pub fn scenario(&self, cell: &Cell) -> Scenario {
        let mut s = self.template.clone();
        for (robot, start) in s.robots.iter_mut().zip(&self.ics[cell.ic]) {
            robot.start = *start;
        }
        s.objects = self.layouts[cell.layout].clone();
        s.mode = cell.mode;
        s.seed = cell.seed;
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub cell: Cell,
    pub outcome: Result<TrialResult, String>,
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

impl TrialRecord {
    pub fn csv_row(&self) -> Vec<String> {
        let c = &self.cell;
        let mut row = vec![c.mode.to_string(), c.ic.to_string(), c.layout.to_string(), c.seed.to_string()];
        match &self.outcome {
            Ok(r) => {
                let len = |k: usize| r.path_length.get(k).map(|&v| f4(v)).unwrap_or_default();
                let det = |k: usize| {
                    r.objects
                        .get(k)
                        .and_then(|o| o.detection_time)
                        .map(f4)
                        .unwrap_or_default()
                };
                row.extend([
                    r.success().to_string(),
                    r.targets_found().to_string(),
                    r.failure_mode.to_string(),
                    len(0),
                    len(1),
                    f4(r.total_path_length()),
                    det(0),
                    det(1),
                    r.priority_waypoints_taken.iter().sum::<usize>().to_string(),
                ]);
            }
            Err(_) => row.extend(
                ["false", "0", "error", "", "", "", "", "", ""].map(String::from),
            ),
        }
        row
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Rate {
    pub hits: usize,
    pub total: usize,
}

impl Rate {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }

    fn add(&mut self, hit: bool) {
        self.hits += hit as usize;
        self.total += 1;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeStats {
    pub mode: PlannerMode,
    pub trials: usize,
    /// Detected target objects over all target objects.
    pub success: Rate,
    pub by_difficulty: BTreeMap<Difficulty, Rate>,
    pub path_len_robot: Vec<MeanStd>,
    pub path_len_total: MeanStd,
    pub failure_modes: BTreeMap<String, usize>,
}

impl ModeStats {
    pub fn failure_rate(&self, mode: FailureMode) -> f64 {
        let n = self.failure_modes.get(&mode.to_string()).copied().unwrap_or(0);
        if self.trials == 0 {
            0.0
        } else {
            n as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub modes: Vec<ModeStats>,
    /// Across all modes.
    pub by_difficulty: BTreeMap<Difficulty, Rate>,
}

impl AggregateReport {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut modes: Vec<PlannerMode> = Vec::new();
        for r in records {
            if !modes.contains(&r.cell.mode) {
                modes.push(r.cell.mode);
            }
        }
        let mut overall: BTreeMap<Difficulty, Rate> = BTreeMap::new();
        let stats = modes
            .into_iter()
            .map(|mode| {
                let mut s = ModeStats {
                    mode,
                    trials: 0,
                    success: Rate::default(),
                    by_difficulty: BTreeMap::new(),
                    path_len_robot: Vec::new(),
                    path_len_total: MeanStd::default(),
                    failure_modes: BTreeMap::new(),
                };
                let mut per_robot: Vec<Vec<f64>> = Vec::new();
                let mut totals = Vec::new();
                for rec in records.iter().filter(|r| r.cell.mode == mode) {
                    s.trials += 1;
                    let r = match &rec.outcome {
                        Ok(r) => r,
                        Err(_) => {
                            *s.failure_modes.entry("error".into()).or_default() += 1;
                            continue;
                        }
                    };
                    *s.failure_modes.entry(r.failure_mode.to_string()).or_default() += 1;
                    for o in r.targets() {
                        s.success.add(o.detected);
                        s.by_difficulty.entry(o.difficulty).or_default().add(o.detected);
                        overall.entry(o.difficulty).or_default().add(o.detected);
                    }
                    if per_robot.len() < r.path_length.len() {
                        per_robot.resize(r.path_length.len(), Vec::new());
                    }
                    for (k, &l) in r.path_length.iter().enumerate() {
                        per_robot[k].push(l);
                    }
                    totals.push(r.total_path_length());
                }
                s.path_len_robot = per_robot.iter().map(|v| MeanStd::of(v)).collect();
                s.path_len_total = MeanStd::of(&totals);
                s
            })
            .collect();
        Self {
            modes: stats,
            by_difficulty: overall,
        }
    }

    pub fn mode(&self, mode: PlannerMode) -> Option<&ModeStats> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Long-format table: `group,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,metric,value\n");
        let mut line = |g: &str, m: &str, v: String| {
            let _ = writeln!(out, "{g},{m},{v}");
        };
        for s in &self.modes {
            let g = s.mode.short_name();
            line(g, "trials", s.trials.to_string());
            line(g, "objects", s.success.total.to_string());
            line(g, "objects_found", s.success.hits.to_string());
            line(g, "success_rate", f4(s.success.value()));
            for (d, r) in &s.by_difficulty {
                line(g, &format!("success_rate_{d}"), f4(r.value()));
            }
            for (k, ms) in s.path_len_robot.iter().enumerate() {
                line(g, &format!("len_robot{k}_mean"), f4(ms.mean));
                line(g, &format!("len_robot{k}_std"), f4(ms.std));
            }
            line(g, "len_total_mean", f4(s.path_len_total.mean));
            line(g, "len_total_std", f4(s.path_len_total.std));
            for (fm, n) in &s.failure_modes {
                line(g, &format!("failure_{fm}"), n.to_string());
            }
        }
        for (d, r) in &self.by_difficulty {
            line("all", &format!("success_rate_{d}"), f4(r.value()));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub records: Vec<TrialRecord>,
    pub report: AggregateReport,
}

pub fn results_csv(records: &[TrialRecord]) -> String {
    rows_csv(records.iter().map(TrialRecord::csv_row))
}

/// `results.csv` text for pre-built rows.
pub fn rows_csv(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Runs every cell, writing `results.csv`, `report.csv` and one trajectory log per trial under `out_dir`.
pub fn run_batch(matrix: &ExperimentMatrix, out_dir: impl AsRef<Path>) -> Result<BatchOutcome, BatchError> {
    matrix.validate()?;
    let map = VectorMap::load(&matrix.template.map_path).map_err(|e| BatchError::Map(e.to_string()))?;
    run_batch_on(matrix, Arc::new(map), out_dir)
}

pub fn run_batch_on(
    matrix: &ExperimentMatrix,
    map: Arc<VectorMap>,
    out_dir: impl AsRef<Path>,
) -> Result<BatchOutcome, BatchError> {
    let out = out_dir.as_ref();
    let logs = out.join("logs");
    fs::create_dir_all(&logs).map_err(|e| io_err(&logs, e))?;

    let records = matrix
        .cells()
        .into_par_iter()
        .map(|cell| -> Result<TrialRecord, BatchError> {
            let scenario = matrix.scenario(&cell);
            let outcome = match run_trial_on(&scenario, map.clone()) {
                Ok((result, log)) => {
                    let path = logs.join(format!("{}.csv", cell.stem()));
                    fs::write(&path, log.to_csv()).map_err(|e| io_err(&path, e))?;
                    log::info!("{}: {}", cell.stem(), result.failure_mode);
                    Ok(result)
                }
                Err(e) => {
                    log::error!("{}: {e}", cell.stem());
                    let path = logs.join(format!("{}.err", cell.stem()));
                    fs::write(&path, e.to_string()).map_err(|e| io_err(&path, e))?;
                    Err(e.to_string())
                }
            };
            Ok(TrialRecord { cell, outcome })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let report = AggregateReport::from_records(&records);
    let results = out.join("results.csv");
    fs::write(&results, results_csv(&records)).map_err(|e| io_err(&results, e))?;
    let report_path = out.join("report.csv");
    fs::write(&report_path, report.to_csv()).map_err(|e| io_err(&report_path, e))?;
    Ok(BatchOutcome { records, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use live_core::simulator::ObjectOutcome;

    fn result(found: [bool; 2], mode: FailureMode, lens: [f64; 2]) -> TrialResult {
        TrialResult {
            objects: found
                .iter()
                .enumerate()
                .map(|(k, &d)| ObjectOutcome {
                    id: format!("o{k}"),
                    is_target: true,
                    difficulty: if k == 0 { Difficulty::Easy } else { Difficulty::Hard },
                    detected: d,
                    detection_time: d.then_some(1.5 * (k + 1) as f64),
                })
                .collect(),
            path_length: lens.to_vec(),
            planned_length: vec![0.0, 0.0],
            failure_mode: mode,
            entropy_trace: vec![],
            priority_waypoints_taken: vec![1, 2],
            ticks: 10,
        }
    }

    fn record(mode: PlannerMode, seed: u64, outcome: Result<TrialResult, String>) -> TrialRecord {
        TrialRecord {
            cell: Cell { mode, ic: 0, layout: 1, seed },
            outcome,
        }
    }

    #[test]
    fn single_trial_aggregates_equal_the_trial() {
        let r = result([true, false], FailureMode::PathFailure, [3.0, 5.0]);
        let rep = AggregateReport::from_records(&[record(PlannerMode::LidarCPP, 0, Ok(r))]);
        let s = rep.mode(PlannerMode::LidarCPP).unwrap();
        assert_eq!(s.trials, 1);
        assert_eq!(s.success, Rate { hits: 1, total: 2 });
        assert_eq!(s.path_len_total, MeanStd { mean: 8.0, std: 0.0, n: 1 });
        assert_eq!(s.path_len_robot[1].mean, 5.0);
        assert_eq!(s.failure_rate(FailureMode::PathFailure), 1.0);
        assert_eq!(rep.by_difficulty[&Difficulty::Easy], Rate { hits: 1, total: 1 });
    }

    #[test]
    fn rows_follow_the_header() {
        let ok = record(PlannerMode::LidarCPPLive, 4, Ok(result([true, true], FailureMode::None, [1.0, 2.25])));
        assert_eq!(
            ok.csv_row().join(","),
            "live,0,1,4,true,2,none,1.0000,2.2500,3.2500,1.5000,3.0000,3"
        );
        let failed = record(PlannerMode::VisualCPP, 4, Err("boom".into()));
        assert_eq!(failed.csv_row().len(), RESULTS_HEADER.len());
        let csv = results_csv(&[ok, failed]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(&RESULTS_HEADER.join(",")));
    }

    #[test]
    fn errors_count_as_failed_trials() {
        let recs = [
            record(PlannerMode::VisualCPP, 0, Err("x".into())),
            record(PlannerMode::VisualCPP, 1, Ok(result([true, true], FailureMode::None, [2.0, 2.0]))),
        ];
        let rep = AggregateReport::from_records(&recs);
        let s = rep.mode(PlannerMode::VisualCPP).unwrap();
        assert_eq!(s.trials, 2);
        assert_eq!(s.failure_modes["error"], 1);
        assert_eq!(s.path_len_total.n, 1);
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let m = MeanStd::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m.mean, 5.0);
        assert!((m.std - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn apartment_matrix_has_the_full_shape() {
        let m = ExperimentMatrix::apartment("apartment.map", vec![0, 1, 2]);
        assert_eq!(m.cells().len(), 135);
        let one_seed = ExperimentMatrix::apartment("apartment.map", vec![0]);
        let cells = one_seed.cells();
        assert_eq!(cells.len(), 45);
        for mode in PlannerMode::ALL {
            assert_eq!(cells.iter().filter(|c| c.mode == mode).count(), 15);
        }
        let s = m.scenario(&Cell {
            mode: PlannerMode::VisualCPP,
            ic: 2,
            layout: 3,
            seed: 7,
        });
        assert_eq!(s, apartment_scenario("apartment.map", 2, 3, PlannerMode::VisualCPP, 7));
    }
}
