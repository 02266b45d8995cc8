//! Seeded generator of arbitrary protocol messages.

use live_core::geometry::Pose2;
use live_core::planner::{PlannerMode, RobotSpec};
use live_core::search_map::SensorFootprint;
use live_core::waypoint_manager::WmState;
use live_harness::protocol::Message;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn name(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(0..12);
    (0..len)
        .map(|_| {
            // Mix plain ASCII with characters JSON has to escape or encode.
            match rng.random_range(0..10) {
                0 => '"',
                1 => '\\',
                2 => 'é',
                3 => '\n',
                4 => '机',
                _ => rng.random_range(b'a'..=b'z') as char,
            }
        })
        .collect()
}

fn real(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..4) {
        0 => rng.random_range(-1e-6..1e-6),
        1 => rng.random_range(-1e6..1e6),
        2 => 0.0,
        _ => rng.random_range(-50.0..50.0),
    }
}

fn pose(rng: &mut ChaCha8Rng) -> Pose2 {
    Pose2::new(real(rng), real(rng), rng.random_range(-10.0..10.0))
}

fn footprint(rng: &mut ChaCha8Rng) -> SensorFootprint {
    if rng.random_bool(0.5) {
        SensorFootprint::Rectangular {
            length: rng.random_range(0.1..20.0),
            width: rng.random_range(0.1..20.0),
        }
    } else {
        SensorFootprint::Triangular {
            range: rng.random_range(0.1..20.0),
            half_angle: rng.random_range(0.01..1.5),
        }
    }
}

pub fn random_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.random_range(0..5) {
        0 => Message::Register {
            robot: name(rng),
            spec: RobotSpec {
                name: name(rng),
                start: pose(rng),
                speed: real(rng),
                turn_rate: real(rng),
                radius: real(rng),
                lidar_fp: footprint(rng),
                camera_fp: footprint(rng),
            },
        },
        1 => Message::Plan {
            robot: name(rng),
            viewpoints: (0..rng.random_range(0..40)).map(|_| pose(rng)).collect(),
            seed: rng.random(),
            mode: PlannerMode::ALL[rng.random_range(0..3)],
        },
        2 => Message::Update {
            robot: name(rng),
            tick: rng.random(),
            believed_pose: pose(rng),
            lidar_footprint_pose: pose(rng),
            camera_footprint_pose: pose(rng),
            wm_state: [WmState::FollowGlobal, WmState::Inspect, WmState::Done][rng.random_range(0..3)],
            reached: rng.random(),
            skipped: rng.random(),
            priority_accepted: rng.random(),
        },
        3 => Message::Ack {
            tick: rng.random(),
            observed: (0..rng.random_range(0..200)).map(|_| rng.random()).collect(),
            finished: rng.random(),
        },
        _ => Message::Done { robot: name(rng) },
    }
}

pub fn messages(seed: u64, n: usize) -> Vec<Message> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_message(&mut rng)).collect()
}
