//! End-to-end trial behaviour on small hand-built worlds.

use std::sync::Arc;

use live_core::geometry::{dist_point_segment, Bounds, LineSegment, Point2, Pose2, VectorMap};
use live_core::planner::{PlannerMode, RobotSpec};
use live_core::search_map::SensorFootprint;
use live_core::simulator::{
    run_trial, run_trial_on, Difficulty, Drift, FailureMode, Scenario, SimParams, TrialResult, WorldObject,
};

fn room(w: f64, h: f64) -> VectorMap {
    let c = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let segs = (0..4)
        .map(|k| LineSegment::new(Point2::new(c[k].0, c[k].1), Point2::new(c[(k + 1) % 4].0, c[(k + 1) % 4].1)).unwrap())
        .collect();
    VectorMap::new(Bounds::new(0.0, 0.0, w, h).unwrap(), segs).unwrap()
}

fn robot(name: &str, start: Pose2) -> RobotSpec {
    RobotSpec {
        name: name.into(),
        start,
        speed: 0.5,
        turn_rate: 1.0,
        radius: 0.25,
        lidar_fp: SensorFootprint::Rectangular { length: 6.0, width: 6.0 },
        camera_fp: SensorFootprint::Triangular { range: 3.5, half_angle: 0.5 },
    }
}

fn target(id: &str, x: f64, y: f64) -> WorldObject {
    WorldObject {
        id: id.into(),
        center: Point2::new(x, y),
        half_extent: 0.25,
        difficulty: Difficulty::Medium,
        is_target: true,
    }
}

fn scenario(robots: Vec<RobotSpec>, objects: Vec<WorldObject>, mode: PlannerMode) -> Scenario {
    Scenario {
        map_path: "unused.map".into(),
        robots,
        objects,
        mode,
        seed: 5,
        tick_dt: 0.2,
        drift: Drift::None,
        detect_prob: 1.0,
        max_ticks: 1500,
        params: SimParams::default(),
    }
}

/// A 10 m × 4 m room; the robot starts at the west end facing east and the
/// target sits in the north-west corner behind it.
fn blind_corner(mode: PlannerMode) -> (Scenario, Arc<VectorMap>) {
    let s = scenario(vec![robot("r0", Pose2::new(1.0, 2.0, 0.0))], vec![target("T", 0.7, 3.3)], mode);
    (s, Arc::new(room(10.0, 4.0)))
}

#[test]
fn target_dead_ahead_is_found() {
    let s = scenario(vec![robot("r0", Pose2::new(1.0, 2.0, 0.0))], vec![target("T", 3.0, 2.0)], PlannerMode::LidarCPP);
    let (r, log) = run_trial_on(&s, Arc::new(room(10.0, 4.0))).unwrap();
    assert_eq!(r.failure_mode, FailureMode::None);
    assert!(r.objects[0].detected);
    assert_eq!(r.objects[0].detection_time, Some(0.2));
    assert!(log.rows.iter().any(|row| row.event == "object_detected:T"));
}

#[test]
fn lidar_plan_misses_the_blind_corner() {
    let (s, map) = blind_corner(PlannerMode::LidarCPP);
    let (r, _) = run_trial_on(&s, map).unwrap();
    assert_eq!(r.failure_mode, FailureMode::PathFailure, "{r:?}");
    assert_eq!(r.targets_found(), 0);
}

#[test]
fn live_inspects_the_blind_corner() {
    let (s, map) = blind_corner(PlannerMode::LidarCPPLive);
    let (r, log) = run_trial_on(&s, map).unwrap();
    assert_eq!(r.failure_mode, FailureMode::None, "{r:?}");
    assert!(r.priority_waypoints_taken[0] >= 1);
    let accepted = log.rows.iter().position(|row| row.event == "priority_accepted").unwrap();
    let detected = log.rows.iter().position(|row| row.event == "object_detected:T").unwrap();
    assert!(accepted < detected);
}

fn two_robot_world(mode: PlannerMode, drift: Drift) -> (Scenario, Arc<VectorMap>) {
    let mut s = scenario(
        vec![robot("a", Pose2::new(1.0, 1.0, 0.0)), robot("b", Pose2::new(7.0, 5.0, 3.14))],
        vec![target("T1", 6.5, 1.2), target("T2", 1.2, 5.0)],
        mode,
    );
    s.drift = drift;
    s.detect_prob = 0.8;
    s.max_ticks = 600;
    (s, Arc::new(room(8.0, 6.0)))
}

fn every_world() -> Vec<(Scenario, Arc<VectorMap>)> {
    let mut v = Vec::new();
    for mode in PlannerMode::ALL {
        v.push(blind_corner(mode));
        v.push(two_robot_world(mode, Drift::default_random_walk()));
    }
    v
}

#[test]
fn trials_are_deterministic() {
    for (s, map) in every_world() {
        let (a, la) = run_trial_on(&s, map.clone()).unwrap();
        let (b, lb) = run_trial_on(&s, map).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.to_csv(), lb.to_csv());
    }
}

fn check_invariants(s: &Scenario, r: &TrialResult) {
    for w in r.entropy_trace.windows(2) {
        assert!(w[1].1 <= w[0].1, "entropy rose: {w:?}");
        assert!(w[1].0 > w[0].0);
    }
    let elapsed = r.ticks as f64 * s.tick_dt;
    for (k, len) in r.path_length.iter().enumerate() {
        assert!(*len >= 0.0);
        assert!(*len <= s.robots[k].speed * elapsed + 1e-9, "robot {k} moved {len} in {elapsed}s");
    }
}

#[test]
fn metric_invariants_hold() {
    for (s, map) in every_world() {
        let (r, _) = run_trial_on(&s, map).unwrap();
        check_invariants(&s, &r);
    }
}

#[test]
fn robots_never_touch_walls() {
    for (s, map) in every_world() {
        let (_, log) = run_trial_on(&s, map.clone()).unwrap();
        for row in &log.rows {
            let p = row.true_pose.position();
            let radius = s.robots[row.robot].radius;
            for seg in map.segments() {
                assert!(dist_point_segment(p, seg) >= radius - 1e-9, "{row:?} hits {seg:?}");
            }
        }
    }
}

#[test]
fn zero_drift_keeps_belief_exact() {
    let (s, map) = two_robot_world(PlannerMode::LidarCPPLive, Drift::None);
    let (_, log) = run_trial_on(&s, map).unwrap();
    assert!(log.rows.iter().all(|row| row.true_pose == row.believed_pose));
    let (s, map) = two_robot_world(PlannerMode::LidarCPPLive, Drift::default_random_walk());
    let (_, log) = run_trial_on(&s, map).unwrap();
    assert!(log.rows.iter().any(|row| row.true_pose != row.believed_pose));
}

#[test]
fn log_csv_has_the_documented_columns() {
    let (s, map) = blind_corner(PlannerMode::LidarCPPLive);
    let (_, log) = run_trial_on(&s, map).unwrap();
    let csv = log.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "tick,time_s,robot,true_x,true_y,true_theta,bel_x,bel_y,bel_theta,wm_state,event"
    );
    for line in lines {
        assert_eq!(line.split(',').count(), 11, "{line}");
    }
}

#[test]
fn scenario_file_resolves_relative_map_path() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, map) = blind_corner(PlannerMode::LidarCPP);
    map.save(dir.path().join("room.map")).unwrap();
    s.map_path = "room.map".into();
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, s.to_json()).unwrap();

    let loaded = Scenario::load(&path).unwrap();
    assert_eq!(loaded.map_path, dir.path().join("room.map"));
    let from_file = run_trial(&loaded).unwrap();
    let (in_memory, _) = run_trial_on(&s, map).unwrap();
    assert_eq!(from_file, in_memory);
}

#[test]
fn invalid_scenarios_are_rejected() {
    let (mut s, map) = blind_corner(PlannerMode::LidarCPP);
    s.detect_prob = 0.0;
    assert!(run_trial_on(&s, map.clone()).is_err());
    let (mut s, _) = blind_corner(PlannerMode::LidarCPP);
    s.objects[0].is_target = false;
    assert!(run_trial_on(&s, map).is_err());
}
