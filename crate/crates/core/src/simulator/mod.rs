//! Deterministic 2D world: robot motion, lidar and camera models against
//! ground truth, pose drift and full trial execution.

mod sensors;
mod trial;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LineSegment, MapFileError, Point2};
use crate::inspection::InspectionConfig;
use crate::perception::{PerceptionConfig, PerceptionError};
use crate::planner::{PlanError, PlannerConfig, PlannerMode, RobotSpec};
use crate::search_map::SearchMapError;
use crate::waypoint_manager::{WaypointConfig, WaypointError};

pub use sensors::{
    camera_candidates, camera_detect, simulate_lidar, simulate_lidar_labeled, step_robot, HitSource,
    Occluders,
};
pub use trial::{
    plan_for, run_trial, run_trial_on, AgentEvents, AgentUpdate, Coordinator, LogRow, RobotAgent, RoundOutcome,
    TrajectoryLog,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        })
    }
}

fn default_half_extent() -> f64 {
    0.25
}

/// Axis-aligned square obstacle that is not part of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: String,
    pub center: Point2,
    #[serde(default = "default_half_extent")]
    pub half_extent: f64,
    pub difficulty: Difficulty,
    pub is_target: bool,
}

impl WorldObject {
    pub fn outline(&self) -> [LineSegment; 4] {
        let h = self.half_extent;
        let c = self.center;
        let corners = [
            Point2::new(c.x - h, c.y - h),
            Point2::new(c.x + h, c.y - h),
            Point2::new(c.x + h, c.y + h),
            Point2::new(c.x - h, c.y + h),
        ];
        std::array::from_fn(|k| {
            LineSegment::new(corners[k], corners[(k + 1) % 4]).expect("positive half extent")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    #[default]
    None,
    /// Standard deviations per √s: metres per axis and radians of heading.
    RandomWalk { pos_std: f64, heading_std: f64 },
}

impl Drift {
    pub fn default_random_walk() -> Self {
        Drift::RandomWalk {
            pos_std: 0.01,
            heading_std: 0.002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarParams {
    pub n_beams: usize,
    pub max_range: f64,
    pub noise_std: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            n_beams: 360,
            max_range: 10.0,
            noise_std: 0.01,
        }
    }
}

/// Tuning knobs shared by every component of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub search_resolution: f64,
    pub nav_resolution: f64,
    pub target_coverage: f64,
    pub planner: PlannerConfig,
    pub perception: PerceptionConfig,
    pub inspection: InspectionConfig,
    pub waypoint: WaypointConfig,
    pub lidar: LidarParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            search_resolution: 0.25,
            nav_resolution: 0.25,
            target_coverage: 0.95,
            planner: PlannerConfig::default(),
            perception: PerceptionConfig::default(),
            inspection: InspectionConfig::default(),
            waypoint: WaypointConfig::default(),
            lidar: LidarParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub map_path: PathBuf,
    pub robots: Vec<RobotSpec>,
    pub objects: Vec<WorldObject>,
    pub mode: PlannerMode,
    pub seed: u64,
    pub tick_dt: f64,
    #[serde(default)]
    pub drift: Drift,
    pub detect_prob: f64,
    pub max_ticks: u64,
    #[serde(default)]
    pub params: SimParams,
}

impl Scenario {
    /// Reads a JSON scenario; a relative `map_path` is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e.to_string()))?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| SimError::Scenario(e.to_string()))?;
        if s.map_path.is_relative() {
            if let Some(dir) = path.parent() {
                s.map_path = dir.join(&s.map_path);
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Scenario(m.to_string()));
        if self.robots.is_empty() {
            return bad("at least one robot is required");
        }
        if !self.objects.iter().any(|o| o.is_target) {
            return bad("at least one target object is required");
        }
        if !(self.tick_dt > 0.0 && self.tick_dt.is_finite()) {
            return bad("tick_dt must be positive");
        }
        if !(self.detect_prob > 0.0 && self.detect_prob <= 1.0) {
            return bad("detect_prob must be in (0, 1]");
        }
        if self.params.lidar.n_beams < 8 {
            return bad("lidar needs at least 8 beams");
        }
        if let Drift::RandomWalk { pos_std, heading_std } = self.drift {
            if !(pos_std >= 0.0 && heading_std >= 0.0) {
                return bad("drift deviations must be non-negative");
            }
        }
        for o in &self.objects {
            if !(o.half_extent > 0.0) {
                return bad("object half_extent must be positive");
            }
        }
        let mut names: Vec<&str> = self.robots.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("robot names must be unique");
        }
        for r in &self.robots {
            r.validate()?;
        }
        self.params.perception.validate()?;
        Ok(())
    }

    pub fn robot_index(&self, name: &str) -> Option<usize> {
        self.robots.iter().position(|r| r.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureMode {
    None,
    PathFailure,
    DetectionFailure,
    /// Tick budget ran out with targets missing and plans unfinished.
    Timeout,
    /// A networked robot dropped out mid-trial.
    TransportFailure,
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureMode::None => "none",
            FailureMode::PathFailure => "path_failure",
            FailureMode::DetectionFailure => "detection_failure",
            FailureMode::Timeout => "timeout",
            FailureMode::TransportFailure => "transport_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub id: String,
    pub is_target: bool,
    pub difficulty: Difficulty,
    pub detected: bool,
    pub detection_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub objects: Vec<ObjectOutcome>,
    /// Executed path length per robot, metres.
    pub path_length: Vec<f64>,
    pub planned_length: Vec<f64>,
    pub failure_mode: FailureMode,
    /// (seconds, bits)
    pub entropy_trace: Vec<(f64, f64)>,
    pub priority_waypoints_taken: Vec<usize>,
    pub ticks: u64,
}

impl TrialResult {
    pub fn success(&self) -> bool {
        self.failure_mode == FailureMode::None
    }

    pub fn targets(&self) -> impl Iterator<Item = &ObjectOutcome> {
        self.objects.iter().filter(|o| o.is_target)
    }

    pub fn targets_found(&self) -> usize {
        self.targets().filter(|o| o.detected).count()
    }

    pub fn total_path_length(&self) -> f64 {
        self.path_length.iter().sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("map: {0}")]
    Map(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Grid(#[from] SearchMapError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Waypoint(#[from] WaypointError),
    #[error("robot index {0} out of range")]
    UnknownRobot(usize),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl From<MapFileError> for SimError {
    fn from(e: MapFileError) -> Self {
        SimError::Map(e.to_string())
    }
}
