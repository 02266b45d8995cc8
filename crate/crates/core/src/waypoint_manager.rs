//! Waypoint state machine that walks the global coverage path and splices in
//! rate-limited priority waypoints for visual inspection.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaypointKind {
    Global,
    Priority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub target: Pose2,
    pub kind: WaypointKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WmState {
    FollowGlobal,
    Inspect,
    Done,
}

impl fmt::Display for WmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WmState::FollowGlobal => "follow_global",
            WmState::Inspect => "inspect",
            WmState::Done => "done",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaypointConfig {
    pub arrival_tol: f64,
    /// Heading tolerance for global waypoints; π disables the check.
    pub global_heading_tol: f64,
    pub priority_heading_tol: f64,
    pub min_priority_interval: f64,
}

impl Default for WaypointConfig {
    fn default() -> Self {
        Self {
            arrival_tol: 0.35,
            global_heading_tol: PI,
            priority_heading_tol: 0.2,
            min_priority_interval: 20.0,
        }
    }
}

/// What happened during one `tick`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickEvents {
    pub reached: bool,
    pub priority_accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointManager {
    global_path: Vec<Pose2>,
    cursor: usize,
    state: WmState,
    last_priority_accept: Option<f64>,
    last_tick: Option<f64>,
    active_priority: Option<Pose2>,
    cfg: WaypointConfig,
    events: TickEvents,
}

impl WaypointManager {
    pub fn new(global_path: Vec<Pose2>, cfg: WaypointConfig) -> Result<Self, WaypointError> {
        if global_path.is_empty() {
            return Err(WaypointError::EmptyPath);
        }
        Ok(Self {
            global_path,
            cursor: 0,
            state: WmState::FollowGlobal,
            last_priority_accept: None,
            last_tick: None,
            active_priority: None,
            cfg,
            events: TickEvents::default(),
        })
    }

    pub fn state(&self) -> WmState {
        self.state
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn global_path(&self) -> &[Pose2] {
        &self.global_path
    }

    pub fn active_priority(&self) -> Option<Pose2> {
        self.active_priority
    }

    pub fn config(&self) -> &WaypointConfig {
        &self.cfg
    }

    /// Events raised by the most recent `tick` or `skip_current`.
    pub fn last_events(&self) -> TickEvents {
        self.events
    }

    pub fn current(&self) -> Option<Waypoint> {
        match self.state {
            WmState::Inspect => self.active_priority.map(|target| Waypoint {
                target,
                kind: WaypointKind::Priority,
            }),
            WmState::FollowGlobal => Some(Waypoint {
                target: self.global_path[self.cursor],
                kind: WaypointKind::Global,
            }),
            WmState::Done => None,
        }
    }

    fn reached(&self, pose: &Pose2, target: &Pose2, heading_tol: f64) -> bool {
        let close = pose.position().distance(target.position()) <= self.cfg.arrival_tol;
        let aligned = heading_tol >= PI || normalize_angle(pose.theta - target.theta).abs() <= heading_tol;
        close && aligned
    }

    fn advance_global(&mut self) {
        self.cursor += 1;
        if self.cursor >= self.global_path.len() {
            self.cursor = self.global_path.len();
            self.state = WmState::Done;
        }
    }

    fn leave_inspection(&mut self) {
        self.active_priority = None;
        self.state = WmState::FollowGlobal;
    }

    pub fn tick(
        &mut self,
        pose: &Pose2,
        now: f64,
        offered_priority: Option<Pose2>,
    ) -> Result<Option<Waypoint>, WaypointError> {
        if let Some(last) = self.last_tick {
            if now <= last {
                return Err(WaypointError::NonMonotonicTime {
                    previous: last,
                    current: now,
                });
            }
        }
        self.last_tick = Some(now);
        self.events = TickEvents::default();

        match self.state {
            WmState::Inspect => {
                let target = self.active_priority.expect("inspect state carries a priority");
                if self.reached(pose, &target, self.cfg.priority_heading_tol) {
                    self.leave_inspection();
                    self.events.reached = true;
                }
            }
            WmState::FollowGlobal => {
                let target = self.global_path[self.cursor];
                if self.reached(pose, &target, self.cfg.global_heading_tol) {
                    self.advance_global();
                    self.events.reached = true;
                }
            }
            WmState::Done => {}
        }

        if self.state == WmState::FollowGlobal {
            if let Some(priority) = offered_priority {
                let ready = self
                    .last_priority_accept
                    .is_none_or(|t| now - t >= self.cfg.min_priority_interval);
                if ready {
                    self.state = WmState::Inspect;
                    self.active_priority = Some(priority);
                    self.last_priority_accept = Some(now);
                    self.events.priority_accepted = true;
                }
            }
        }
        Ok(self.current())
    }

    /// Abandons the current target (navigation could not reach it).
    pub fn skip_current(&mut self) -> Option<Waypoint> {
        match self.state {
            WmState::Inspect => self.leave_inspection(),
            WmState::FollowGlobal => self.advance_global(),
            WmState::Done => {}
        }
        self.current()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaypointError {
    #[error("global path is empty")]
    EmptyPath,
    #[error("tick time {current} does not follow {previous}")]
    NonMonotonicTime { previous: f64, current: f64 },
}
