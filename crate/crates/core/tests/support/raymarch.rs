//! Brute-force ray-marching oracle, independent of the library's intersection code.

use live_core::geometry::{Bounds, LineSegment, Point2, Pose2, VectorMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 0.001;
pub const TOL: f64 = 0.005;

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_box(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection written independently of the library.
fn crosses(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_box(q1, q2, p1))
        || (d2 == 0.0 && on_box(q1, q2, p2))
        || (d3 == 0.0 && on_box(p1, p2, q1))
        || (d4 == 0.0 && on_box(p1, p2, q2))
}

/// Marches in 1 mm steps and reports the first step whose sub-segment touches a wall.
pub fn march(pose: &Pose2, bearing: f64, max_range: f64, segs: &[LineSegment]) -> Option<f64> {
    let a = pose.theta + bearing;
    let dir = Point2::new(a.cos(), a.sin());
    let origin = pose.position();
    let steps = (max_range / STEP).ceil() as usize;
    let mut prev = origin;
    for k in 1..=steps {
        let t = (k as f64 * STEP).min(max_range);
        let here = origin + dir * t;
        if segs.iter().any(|s| crosses(prev, here, s.a, s.b)) {
            return Some(t);
        }
        prev = here;
    }
    None
}

pub fn random_map(rng: &mut ChaCha8Rng) -> VectorMap {
    let bounds = Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let n = rng.random_range(1..=8);
    let mut segs = Vec::with_capacity(n);
    while segs.len() < n {
        let a = Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let b = Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        if let Ok(s) = LineSegment::new(a, b) {
            segs.push(s);
        }
    }
    VectorMap::new(bounds, segs).unwrap()
}

/// Outcome of `check_cases`: hits compared and the worst disagreement.
pub struct OracleReport {
    pub cases: usize,
    pub hits: usize,
    pub max_error: f64,
    pub mismatches: Vec<String>,
}

/// Compares `ray_cast` with the marching oracle over `cases` random draws.
pub fn check_cases(seed: u64, cases: usize, max_range: f64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        cases: 0,
        hits: 0,
        max_error: 0.0,
        mismatches: Vec::new(),
    };
    while report.cases < cases {
        let map = random_map(&mut rng);
        let pose = Pose2::new(
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..10.0),
            rng.random_range(-3.14..3.14),
        );
        // Origins touching a wall make the first marching step degenerate.
        if map.nearest_distance(pose.position()).unwrap() < 2.0 * STEP {
            continue;
        }
        report.cases += 1;
        let bearing = rng.random_range(-3.14..3.14);
        let analytic = live_core::geometry::ray_cast(&pose, bearing, max_range, &map);
        let oracle = march(&pose, bearing, max_range, map.segments());
        match (analytic, oracle) {
            (Some(a), Some(o)) => {
                report.hits += 1;
                report.max_error = report.max_error.max((a - o).abs());
                if (a - o).abs() > TOL {
                    report.mismatches.push(format!("{pose:?} b={bearing}: analytic {a} oracle {o}"));
                }
            }
            (None, None) => {}
            // A hit within one step of max_range can land on either side.
            (Some(a), None) | (None, Some(a)) => {
                if a <= max_range - TOL {
                    report.mismatches.push(format!("{pose:?} b={bearing}: one-sided hit at {a}"));
                }
            }
        }
    }
    report
}
