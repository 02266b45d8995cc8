//! Randomized drivers for the waypoint manager.

use live_core::geometry::Pose2;
use live_core::waypoint_manager::{WaypointConfig, WaypointManager, WmState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Window lengths, in seconds, checked against the acceptance bound.
pub const WINDOWS: [f64; 7] = [0.5, 5.0, 19.9, 20.0, 45.0, 200.0, 1000.0];

#[derive(Debug, Default)]
pub struct OfferReport {
    pub ticks: usize,
    pub accepted: usize,
    pub episodes: usize,
    /// Worst `count − bound` over all windows; must stay ≤ 0.
    pub worst_excess: i64,
    pub resume_violations: usize,
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose2 {
    Pose2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(-3.0..3.0))
}

/// Drives a manager with random poses, random tick spacing and random offers.
/// Poses snap near the current target often enough to complete episodes.
pub fn offer_stream(seed: u64, ticks: usize) -> OfferReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path: Vec<Pose2> = (0..rng.random_range(50..200)).map(|_| random_pose(&mut rng)).collect();
    let cfg = WaypointConfig {
        min_priority_interval: rng.random_range(2.0..30.0),
        ..WaypointConfig::default()
    };
    let mut wm = WaypointManager::new(path, cfg).unwrap();
    let mut report = OfferReport {
        ticks,
        ..OfferReport::default()
    };
    let mut accept_times = Vec::new();
    let mut cursor_at_accept = 0;
    let mut now = 0.0;
    for _ in 0..ticks {
        now += rng.random_range(0.05..1.0);
        let before = wm.state();
        let pose = match wm.current() {
            Some(w) if rng.random_bool(0.3) => w.target,
            _ => random_pose(&mut rng),
        };
        let offer = rng.random_bool(0.4).then(|| random_pose(&mut rng));
        wm.tick(&pose, now, offer).unwrap();
        let ev = wm.last_events();
        if before == WmState::Inspect {
            // The global cursor is frozen while inspecting and resumes where it was.
            let resumed_elsewhere = wm.state() == WmState::FollowGlobal
                && wm.current().map(|w| w.target) != Some(wm.global_path()[wm.cursor()]);
            if wm.cursor() != cursor_at_accept || resumed_elsewhere {
                report.resume_violations += 1;
            }
            if wm.state() != WmState::Inspect || ev.priority_accepted {
                report.episodes += 1;
            }
        }
        if ev.priority_accepted {
            accept_times.push(now);
            cursor_at_accept = wm.cursor();
        }
        if wm.state() == WmState::Done {
            break;
        }
    }
    report.accepted = accept_times.len();
    let interval = wm.config().min_priority_interval;
    for w in WINDOWS {
        let bound = (w / interval).floor() as i64 + 1;
        let mut j = 0;
        for i in 0..accept_times.len() {
            while j < accept_times.len() && accept_times[j] <= accept_times[i] + w {
                j += 1;
            }
            report.worst_excess = report.worst_excess.max((j - i) as i64 - bound);
        }
    }
    report
}

/// Moves straight at `step` metres per tick towards the current target and
/// adopts its heading on arrival. Returns the tick at which Done was reached.
pub fn priority_free_run(seed: u64, step: f64) -> Option<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path: Vec<Pose2> = (0..rng.random_range(1..60)).map(|_| random_pose(&mut rng)).collect();
    let mut budget = path.len();
    let mut prev = Pose2::default();
    for p in &path {
        budget += (prev.position().distance(p.position()) / step).ceil() as usize + 1;
        prev = *p;
    }
    let cfg = WaypointConfig {
        global_heading_tol: 0.2,
        ..WaypointConfig::default()
    };
    let mut wm = WaypointManager::new(path, cfg).unwrap();
    let mut pose = Pose2::default();
    for k in 1..=budget {
        if let Some(w) = wm.current() {
            let to = w.target.position() - pose.position();
            let d = to.norm();
            pose = if d <= step {
                w.target
            } else {
                let p = pose.position() + to * (step / d);
                Pose2::new(p.x, p.y, to.y.atan2(to.x))
            };
        }
        wm.tick(&pose, k as f64 * 0.2, None).unwrap();
        if wm.state() == WmState::Done {
            return Some(k);
        }
    }
    None
}
