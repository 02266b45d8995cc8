//! Lockstep trial loop.
//!
//! Each tick has two phases. Every active `RobotAgent` first moves, senses and
//! updates its waypoint manager, producing an `AgentUpdate`. The `Coordinator`
//! then folds those updates into the shared search map in robot order, runs
//! camera detection and returns the cells that became visually observed, which
//! each agent mirrors before the next tick. The networked harness runs the same
//! two halves on either side of a socket.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::sensors::{camera_candidates, simulate_lidar_labeled, Occluders};
use super::{Drift, FailureMode, ObjectOutcome, Scenario, SimError, TrialResult};
use crate::geometry::{Pose2, VectorMap};
use crate::inspection::{filter_regions, pool_stfs_counted, region_to_priority_waypoint, select_nearest};
use crate::navigation::{NavGrid, Navigator, StepStatus};
use crate::perception::{classify_scan, FeatureClass, ScanHistory};
use crate::planner::{plan_coverage_with, CoveragePlan, PlannerMode};
use crate::search_map::SearchMap;
use crate::waypoint_manager::{WaypointConfig, WaypointManager, WmState};

const SENSOR_STREAM: u64 = 1;
const DETECT_STREAM: u64 = 2;

fn stream_rng(seed: u64, robot: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + robot as u64 * 4 + stream);
    rng
}

/// Waypoint settings for a mode: camera plans must be flown with the planned heading.
pub(crate) fn waypoint_config(scenario: &Scenario) -> WaypointConfig {
    let mut cfg = scenario.params.waypoint;
    if scenario.mode == PlannerMode::VisualCPP {
        cfg.global_heading_tol = cfg.priority_heading_tol;
    }
    cfg
}

pub fn plan_for(scenario: &Scenario, map: &VectorMap) -> Result<CoveragePlan, SimError> {
    Ok(plan_coverage_with(
        map,
        &scenario.robots,
        scenario.mode,
        scenario.params.target_coverage,
        scenario.seed,
        &scenario.params.planner,
    )?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AgentEvents {
    pub reached: bool,
    pub skipped: bool,
    pub priority_accepted: bool,
}

/// What a robot reports to the coordinator after its half of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentUpdate {
    pub robot: usize,
    pub tick: u64,
    pub true_pose: Pose2,
    pub believed_pose: Pose2,
    pub wm_state: WmState,
    pub events: AgentEvents,
}

/// Robot-side state: navigation, drift, lidar, perception and waypoint management.
pub struct RobotAgent {
    index: usize,
    scenario: Arc<Scenario>,
    map: Arc<VectorMap>,
    occluders: Occluders,
    nav: Navigator,
    wm: WaypointManager,
    history: ScanHistory,
    mirror: SearchMap,
    true_pose: Pose2,
    drift_offset: (f64, f64, f64),
    rng: ChaCha8Rng,
    done: bool,
}

impl RobotAgent {
    pub fn new(
        index: usize,
        scenario: Arc<Scenario>,
        map: Arc<VectorMap>,
        viewpoints: Vec<Pose2>,
    ) -> Result<Self, SimError> {
        let spec = scenario.robots.get(index).ok_or(SimError::UnknownRobot(index))?;
        let params = &scenario.params;
        let nav_grid = NavGrid::new(map.clone(), params.nav_resolution, spec.radius)?;
        let path = if viewpoints.is_empty() {
            vec![spec.start]
        } else {
            viewpoints
        };
        Ok(Self {
            index,
            occluders: Occluders::from_world(&map, &scenario.objects),
            nav: Navigator::new(Arc::new(nav_grid), 1.0),
            wm: WaypointManager::new(path, waypoint_config(&scenario))?,
            history: ScanHistory::for_config(&params.perception),
            mirror: SearchMap::new(map.clone(), params.search_resolution)?,
            true_pose: spec.start,
            drift_offset: (0.0, 0.0, 0.0),
            rng: stream_rng(scenario.seed, index, SENSOR_STREAM),
            done: false,
            map,
            scenario,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn true_pose(&self) -> Pose2 {
        self.true_pose
    }

    pub fn believed_pose(&self) -> Pose2 {
        let (dx, dy, dt) = self.drift_offset;
        let p = self.true_pose;
        Pose2::new(p.x + dx, p.y + dy, p.theta + dt)
    }

    pub fn waypoint_manager(&self) -> &WaypointManager {
        &self.wm
    }

    /// Cells the coordinator reports as visually observed.
    pub fn observe(&mut self, cells: &[u32]) {
        self.mirror.mark_observed(cells);
    }

    pub fn step(&mut self, tick: u64) -> Result<AgentUpdate, SimError> {
        let scenario = self.scenario.clone();
        let spec = &scenario.robots[self.index];
        let dt = scenario.tick_dt;
        let now = tick as f64 * dt;
        let mut events = AgentEvents::default();

        if let Some(wp) = self.wm.current() {
            let (pose, status) = self.nav.step(&self.true_pose, &wp.target, spec.speed, spec.turn_rate, dt);
            self.true_pose = pose;
            if status == StepStatus::Unreachable {
                self.wm.skip_current();
                self.nav.reset();
                events.skipped = true;
            }
        }

        if let Drift::RandomWalk { pos_std, heading_std } = scenario.drift {
            let s = dt.sqrt();
            let (dx, dy, dh) = &mut self.drift_offset;
            if pos_std > 0.0 {
                let n = Normal::new(0.0, pos_std * s).expect("finite std");
                *dx += n.sample(&mut self.rng);
                *dy += n.sample(&mut self.rng);
            }
            if heading_std > 0.0 {
                *dh += Normal::new(0.0, heading_std * s).expect("finite std").sample(&mut self.rng);
            }
        }
        let believed = self.believed_pose();

        let offer = if scenario.mode.uses_live() {
            self.inspect(&believed, now)?
        } else {
            None
        };

        self.wm.tick(&self.true_pose, now, offer)?;
        let wm_events = self.wm.last_events();
        events.reached |= wm_events.reached;
        events.priority_accepted = wm_events.priority_accepted;
        if self.wm.state() == WmState::Done {
            self.done = true;
        }
        Ok(AgentUpdate {
            robot: self.index,
            tick,
            true_pose: self.true_pose,
            believed_pose: believed,
            wm_state: self.wm.state(),
            events,
        })
    }

    /// Lidar scan through classification to an offered priority waypoint.
    fn inspect(&mut self, believed: &Pose2, now: f64) -> Result<Option<Pose2>, SimError> {
        let p = &self.scenario.params;
        let (scan, _) = simulate_lidar_labeled(
            &self.occluders,
            &self.true_pose,
            believed,
            p.lidar.n_beams,
            p.lidar.max_range,
            p.lidar.noise_std,
            now,
            &mut self.rng,
        );
        if scan.points.is_empty() {
            return Ok(None);
        }
        let classified = classify_scan(&scan, &self.map, &mut self.history, &p.perception)?;
        let stf: Vec<_> = classified.points_with(FeatureClass::Stf).collect();
        if stf.is_empty() {
            return Ok(None);
        }
        let pooled = pool_stfs_counted(&stf, p.inspection.pool_radius);
        let mut regions = filter_regions(&pooled, &self.map, &self.mirror, &p.inspection, now);
        // A return that appears behind a mapped wall can only come from pose error.
        let eye = believed.position();
        regions.retain(|r| !self.map.blocks(eye, r.center));
        Ok(select_nearest(&regions, believed)
            .map(|r| region_to_priority_waypoint(&r, believed, p.inspection.standoff)))
    }
}

/// One trajectory log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub tick: u64,
    pub time_s: f64,
    pub robot: usize,
    pub true_pose: Pose2,
    pub believed_pose: Pose2,
    pub wm_state: WmState,
    pub event: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub const HEADER: &'static str =
        "tick,time_s,robot,true_x,true_y,true_theta,bel_x,bel_y,bel_theta,wm_state,event";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 80);
        out.push_str(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.3},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
                r.tick,
                r.time_s,
                r.robot,
                r.true_pose.x,
                r.true_pose.y,
                r.true_pose.theta,
                r.believed_pose.x,
                r.believed_pose.y,
                r.believed_pose.theta,
                r.wm_state,
                r.event
            );
        }
        out
    }
}

/// Result of folding one tick of updates into the shared state.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Cells newly marked as visually observed, in application order.
    pub observed: Vec<u32>,
    pub finished: bool,
}

#[derive(Debug, Clone)]
struct ObjectState {
    detected_at: Option<f64>,
    was_candidate: bool,
}

/// Server-side state: the shared search map, camera detection and metrics.
pub struct Coordinator {
    scenario: Arc<Scenario>,
    map: Arc<VectorMap>,
    search: SearchMap,
    plan: CoveragePlan,
    detect_rngs: Vec<ChaCha8Rng>,
    last_pose: Vec<Pose2>,
    path_length: Vec<f64>,
    priority_taken: Vec<usize>,
    done: Vec<bool>,
    objects: Vec<ObjectState>,
    entropy_trace: Vec<(f64, f64)>,
    log: TrajectoryLog,
    tick: u64,
    finished: bool,
}

impl Coordinator {
    /// Plans the trial and prepares the shared state.
    pub fn new(scenario: Arc<Scenario>, map: Arc<VectorMap>) -> Result<Self, SimError> {
        scenario.validate()?;
        let plan = plan_for(&scenario, &map)?;
        let search = SearchMap::new(map.clone(), scenario.params.search_resolution)?;
        let n = scenario.robots.len();
        let entropy_trace = vec![(0.0, search.entropy())];
        Ok(Self {
            detect_rngs: (0..n).map(|i| stream_rng(scenario.seed, i, DETECT_STREAM)).collect(),
            last_pose: scenario.robots.iter().map(|r| r.start).collect(),
            path_length: vec![0.0; n],
            priority_taken: vec![0; n],
            done: vec![false; n],
            objects: scenario
                .objects
                .iter()
                .map(|_| ObjectState {
                    detected_at: None,
                    was_candidate: false,
                })
                .collect(),
            entropy_trace,
            log: TrajectoryLog::default(),
            tick: 0,
            finished: false,
            search,
            plan,
            map,
            scenario,
        })
    }

    pub fn plan(&self) -> &CoveragePlan {
        &self.plan
    }

    pub fn search_map(&self) -> &SearchMap {
        &self.search
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn is_robot_done(&self, robot: usize) -> bool {
        self.done[robot]
    }

    pub fn active_robots(&self) -> Vec<usize> {
        (0..self.done.len()).filter(|&r| !self.done[r]).collect()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Applies the updates for `tick`. They must come from exactly the active robots.
    pub fn apply_round(&mut self, tick: u64, updates: &[AgentUpdate]) -> Result<RoundOutcome, SimError> {
        if self.finished {
            return Err(SimError::Protocol("trial already finished".into()));
        }
        if tick != self.tick + 1 {
            return Err(SimError::Protocol(format!("expected tick {}, got {tick}", self.tick + 1)));
        }
        let mut sorted: Vec<&AgentUpdate> = updates.iter().collect();
        sorted.sort_by_key(|u| u.robot);
        let robots: Vec<usize> = sorted.iter().map(|u| u.robot).collect();
        if robots != self.active_robots() || sorted.iter().any(|u| u.tick != tick) {
            return Err(SimError::Protocol(format!(
                "tick {tick}: updates from {robots:?}, expected {:?}",
                self.active_robots()
            )));
        }

        let scenario = self.scenario.clone();
        let now = tick as f64 * scenario.tick_dt;
        let mut observed = Vec::new();
        for u in sorted {
            let r = u.robot;
            let spec = &scenario.robots[r];
            self.path_length[r] += self.last_pose[r].position().distance(u.true_pose.position());
            self.last_pose[r] = u.true_pose;
            if u.events.priority_accepted {
                self.priority_taken[r] += 1;
            }
            self.search.apply_footprint_tracked(&u.true_pose, &spec.lidar_fp, &mut observed);
            self.search.apply_footprint_tracked(&u.true_pose, &spec.camera_fp, &mut observed);

            let mut events = Vec::new();
            if u.events.priority_accepted {
                events.push("priority_accepted".to_string());
            }
            if u.events.reached {
                events.push("waypoint_reached".to_string());
            }
            if u.events.skipped {
                events.push("waypoint_skipped".to_string());
            }
            let rng = &mut self.detect_rngs[r];
            for k in camera_candidates(&self.map, &scenario.objects, &u.true_pose, &spec.camera_fp) {
                self.objects[k].was_candidate = true;
                let hit = rand::Rng::random::<f64>(rng) < scenario.detect_prob;
                if hit && self.objects[k].detected_at.is_none() {
                    self.objects[k].detected_at = Some(now);
                    events.push(format!("object_detected:{}", scenario.objects[k].id));
                }
            }
            if events.is_empty() {
                events.push("none".to_string());
            }
            for event in events {
                self.log.rows.push(LogRow {
                    tick,
                    time_s: now,
                    robot: r,
                    true_pose: u.true_pose,
                    believed_pose: u.believed_pose,
                    wm_state: u.wm_state,
                    event,
                });
            }
            if u.wm_state == WmState::Done {
                self.done[r] = true;
            }
        }
        self.entropy_trace.push((now, self.search.entropy()));
        self.tick = tick;

        let all_found = scenario
            .objects
            .iter()
            .zip(&self.objects)
            .all(|(o, s)| !o.is_target || s.detected_at.is_some());
        self.finished = all_found || self.done.iter().all(|&d| d) || tick >= scenario.max_ticks;
        Ok(RoundOutcome {
            observed,
            finished: self.finished,
        })
    }

    pub fn result(&self) -> TrialResult {
        self.result_with(None)
    }

    /// Result of an aborted networked trial.
    pub fn transport_failure(&self) -> TrialResult {
        self.result_with(Some(FailureMode::TransportFailure))
    }

    fn result_with(&self, forced: Option<FailureMode>) -> TrialResult {
        let objects: Vec<ObjectOutcome> = self
            .scenario
            .objects
            .iter()
            .zip(&self.objects)
            .map(|(o, s)| ObjectOutcome {
                id: o.id.clone(),
                is_target: o.is_target,
                difficulty: o.difficulty,
                detected: s.detected_at.is_some(),
                detection_time: s.detected_at,
            })
            .collect();
        let missing: Vec<usize> = self
            .scenario
            .objects
            .iter()
            .enumerate()
            .filter(|(k, o)| o.is_target && self.objects[*k].detected_at.is_none())
            .map(|(k, _)| k)
            .collect();
        let failure_mode = forced.unwrap_or_else(|| {
            if missing.is_empty() {
                FailureMode::None
            } else if missing.iter().any(|&k| self.objects[k].was_candidate) {
                FailureMode::DetectionFailure
            } else if self.done.iter().all(|&d| d) {
                FailureMode::PathFailure
            } else {
                FailureMode::Timeout
            }
        });
        TrialResult {
            objects,
            path_length: self.path_length.clone(),
            planned_length: self.plan.planned_length.clone(),
            failure_mode,
            entropy_trace: self.entropy_trace.clone(),
            priority_waypoints_taken: self.priority_taken.clone(),
            ticks: self.tick,
        }
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }
}

/// Loads the scenario's map and runs the trial in-process.
pub fn run_trial(scenario: &Scenario) -> Result<TrialResult, SimError> {
    let map = VectorMap::load(&scenario.map_path)?;
    Ok(run_trial_on(scenario, Arc::new(map))?.0)
}

pub fn run_trial_on(
    scenario: &Scenario,
    map: Arc<VectorMap>,
) -> Result<(TrialResult, TrajectoryLog), SimError> {
    let scenario = Arc::new(scenario.clone());
    let mut coord = Coordinator::new(scenario.clone(), map.clone())?;
    let mut agents = (0..scenario.robots.len())
        .map(|i| RobotAgent::new(i, scenario.clone(), map.clone(), coord.plan().viewpoints[i].clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tick = 0;
    while !coord.is_finished() {
        tick += 1;
        let mut updates = Vec::with_capacity(agents.len());
        for a in agents.iter_mut().filter(|a| !a.is_done()) {
            updates.push(a.step(tick)?);
        }
        let outcome = coord.apply_round(tick, &updates)?;
        for a in agents.iter_mut().filter(|a| !a.is_done()) {
            a.observe(&outcome.observed);
        }
        log::debug!("tick {tick}: {} cells observed", outcome.observed.len());
    }
    Ok((coord.result(), coord.log().clone()))
}
