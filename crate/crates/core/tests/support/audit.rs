//! Ground-truth audit of per-point classification: every simulated beam knows
//! whether it hit a wall, a static box or a moving disc.

use live_core::geometry::{Bounds, LineSegment, Point2, Pose2, VectorMap};
use live_core::perception::{classify_scan, FeatureClass, PerceptionConfig, ScanHistory};
use live_core::simulator::{simulate_lidar_labeled, Difficulty, HitSource, Occluders, WorldObject};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BOX: usize = 0;
const DISC: usize = 1;
const DISC_RADIUS: f64 = 0.2;
const DISC_SIDES: usize = 24;

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub labeled: usize,
    pub total: usize,
}

impl Tally {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.labeled as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct AuditReport {
    pub wall_ltf: Tally,
    /// Box points from the second scan that saw the box onward.
    pub box_stf: Tally,
    pub disc_stf: Tally,
}

fn room() -> VectorMap {
    let c = [(0.0, 0.0), (10.0, 0.0), (10.0, 8.0), (0.0, 8.0)];
    let segs = (0..4)
        .map(|k| {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            LineSegment::new(Point2::new(a.0, a.1), Point2::new(b.0, b.1)).unwrap()
        })
        .chain([LineSegment::new(Point2::new(6.0, 0.0), Point2::new(6.0, 3.0)).unwrap()])
        .collect();
    VectorMap::new(Bounds::new(0.0, 0.0, 10.0, 8.0).unwrap(), segs).unwrap()
}

fn disc(center: Point2) -> Vec<LineSegment> {
    let v: Vec<Point2> = (0..DISC_SIDES)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / DISC_SIDES as f64;
            center + Point2::new(a.cos(), a.sin()) * DISC_RADIUS
        })
        .collect();
    (0..DISC_SIDES)
        .map(|k| LineSegment::new(v[k], v[(k + 1) % DISC_SIDES]).unwrap())
        .collect()
}

/// A stream of walkers: the disc crosses the room diagonally at 1.4 m/s and
/// re-enters at the far corner.
fn disc_center(t: f64) -> Point2 {
    let (a, b) = (Point2::new(9.0, 7.5), Point2::new(1.0, 4.8));
    let len = a.distance(b);
    let s = (1.4 * t) % len;
    a + (b - a) * (s / len)
}

/// Zero drift, 1 cm range noise, default perception settings (sigma_s 0.0025).
pub fn run_audit(seed: u64, ticks: usize) -> AuditReport {
    let map = room();
    let cfg = PerceptionConfig::default();
    let static_box = WorldObject {
        id: "box".into(),
        center: Point2::new(4.0, 2.0),
        half_extent: 0.25,
        difficulty: Difficulty::Easy,
        is_target: true,
    };
    let mut history = ScanHistory::for_config(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport::default();
    let mut box_scans = 0usize;
    let dt = 0.2;
    for k in 0..ticks {
        let t = (k + 1) as f64 * dt;
        // The robot creeps east along y = 4 and turns slowly.
        let pose = Pose2::new(1.0 + 0.3 * t.min(15.0), 4.0, 0.2 * t);
        let mut occ = Occluders::from_world(&map, std::slice::from_ref(&static_box));
        occ.extend(HitSource::Object(DISC), disc(disc_center(t)));
        let (scan, sources) = simulate_lidar_labeled(&occ, &pose, &pose, 360, 10.0, 0.01, t, &mut rng);
        let classified = classify_scan(&scan, &map, &mut history, &cfg).unwrap();
        let saw_box = sources.contains(&HitSource::Object(BOX));
        for (src, label) in sources.iter().zip(&classified.labels) {
            match src {
                HitSource::Map => {
                    report.wall_ltf.total += 1;
                    report.wall_ltf.labeled += (*label == FeatureClass::Ltf) as usize;
                }
                HitSource::Object(BOX) if box_scans >= 1 => {
                    report.box_stf.total += 1;
                    report.box_stf.labeled += (*label == FeatureClass::Stf) as usize;
                }
                HitSource::Object(DISC) => {
                    report.disc_stf.total += 1;
                    report.disc_stf.labeled += (*label == FeatureClass::Stf) as usize;
                }
                _ => {}
            }
        }
        box_scans += saw_box as usize;
    }
    report
}
