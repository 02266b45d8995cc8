//! Built-in worlds: a fixed 20 m × 30 m apartment with seven object locations,
//! three initial conditions and five layouts, plus a seeded generator of
//! random apartments of the same size.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Bounds, LineSegment, Point2, Pose2, VectorMap};
use crate::planner::{PlannerMode, RobotSpec};
use crate::search_map::SensorFootprint;
use crate::simulator::{Difficulty, Drift, Scenario, SimParams, WorldObject};

pub const APARTMENT_WIDTH: f64 = 20.0;
pub const APARTMENT_HEIGHT: f64 = 30.0;

/// Accumulates wall segments.
#[derive(Debug, Default)]
struct Walls(Vec<LineSegment>);

impl Walls {
    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.0
            .push(LineSegment::new(Point2::new(x0, y0), Point2::new(x1, y1)).expect("non-degenerate wall"));
    }

    /// Axis-aligned rectangle outline.
    fn block(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        self.line(x0, y0, x1, y0);
        self.line(x1, y0, x1, y1);
        self.line(x1, y1, x0, y1);
        self.line(x0, y1, x0, y0);
    }

    /// Vertical wall at `x` from `y0` to `y1` with door gaps `(start, end)`.
    fn vertical(&mut self, x: f64, y0: f64, y1: f64, doors: &[(f64, f64)]) {
        let mut y = y0;
        for &(a, b) in doors {
            if a > y {
                self.line(x, y, x, a);
            }
            y = b;
        }
        if y1 > y {
            self.line(x, y, x, y1);
        }
    }

    /// Horizontal wall at `y` from `x0` to `x1` with door gaps.
    fn horizontal(&mut self, y: f64, x0: f64, x1: f64, doors: &[(f64, f64)]) {
        let mut x = x0;
        for &(a, b) in doors {
            if a > x {
                self.line(x, y, a, y);
            }
            x = b;
        }
        if x1 > x {
            self.line(x, y, x1, y);
        }
    }

    fn into_map(self) -> VectorMap {
        let bounds = Bounds::new(0.0, 0.0, APARTMENT_WIDTH, APARTMENT_HEIGHT).expect("valid bounds");
        VectorMap::new(bounds, self.0).expect("walls inside bounds")
    }
}

/// Three rooms west of a 4 m hallway, three east of it, with mapped furniture.
pub fn apartment_map() -> VectorMap {
    let mut w = Walls::default();
    w.block(0.0, 0.0, APARTMENT_WIDTH, APARTMENT_HEIGHT);

    // Hallway walls, x = 8 and x = 12.
    w.vertical(8.0, 0.0, 30.0, &[(7.0, 8.4), (17.0, 18.4), (21.5, 22.9)]);
    w.vertical(12.0, 0.0, 30.0, &[(9.5, 11.5), (15.2, 16.6), (26.6, 28.0)]);

    // West rooms.
    w.horizontal(10.0, 0.0, 8.0, &[]);
    w.horizontal(20.0, 0.0, 8.0, &[]);
    // East rooms.
    w.horizontal(14.0, 12.0, 20.0, &[]);
    w.horizontal(21.0, 12.0, 20.0, &[]);

    // Furniture is at most 0.5 m deep so no unobservable interior remains.
    // Bedroom west: wardrobe and a bookshelf.
    w.block(5.4, 0.0, 7.6, 0.5);
    w.block(0.0, 4.0, 2.5, 4.4);
    // Study: desk and shelf.
    w.block(0.0, 12.0, 0.5, 14.0);
    w.block(3.0, 19.5, 6.0, 20.0);
    // Guest room: bed frame.
    w.block(0.0, 26.0, 2.2, 26.5);
    // Living room: sofa and side table.
    w.block(14.5, 5.0, 17.5, 5.5);
    w.block(17.6, 9.8, 18.1, 11.0);
    // Kitchen: counter along the east wall and an island.
    w.block(19.5, 14.0, 20.0, 21.0);
    w.block(15.0, 17.5, 17.0, 18.0);
    // Master bedroom: bed frame.
    w.block(16.8, 24.0, 20.0, 24.5);
    w.block(16.8, 24.5, 17.3, 26.2);

    w.into_map()
}

fn object(id: &str, x: f64, y: f64, difficulty: Difficulty) -> WorldObject {
    WorldObject {
        id: id.to_string(),
        center: Point2::new(x, y),
        half_extent: 0.25,
        difficulty,
        is_target: true,
    }
}

/// The seven candidate object locations.
pub fn apartment_objects() -> Vec<WorldObject> {
    vec![
        object("E1", 10.0, 6.0, Difficulty::Easy),
        object("E2", 10.0, 24.0, Difficulty::Easy),
        object("M1", 1.25, 19.25, Difficulty::Medium),
        object("M2", 15.75, 18.75, Difficulty::Medium),
        object("M3", 18.25, 23.0, Difficulty::Medium),
        object("H1", 18.4, 14.75, Difficulty::Hard),
        object("H2", 1.5, 20.8, Difficulty::Hard),
    ]
}

/// Object pairs (indices into `apartment_objects`) for the five layouts.
pub const LAYOUTS: [[usize; 2]; 5] = [[0, 2], [1, 5], [3, 6], [0, 4], [3, 5]];

/// Robot start poses for the three initial conditions.
pub fn initial_conditions() -> [[Pose2; 2]; 3] {
    [
        [Pose2::new(10.0, 1.5, 1.5708), Pose2::new(10.0, 28.5, -1.5708)],
        [Pose2::new(15.0, 12.0, 3.1416), Pose2::new(4.0, 24.0, 0.0)],
        [Pose2::new(10.0, 14.0, 1.5708), Pose2::new(16.0, 16.0, 3.1416)],
    ]
}

/// A quadruped and a slower mobile manipulator with the same sensor geometry.
pub fn team(starts: &[Pose2; 2]) -> Vec<RobotSpec> {
    let lidar_fp = SensorFootprint::Rectangular { length: 6.0, width: 6.0 };
    let camera_fp = SensorFootprint::Triangular { range: 3.5, half_angle: 0.5 };
    vec![
        RobotSpec {
            name: "a1".into(),
            start: starts[0],
            speed: 0.6,
            turn_rate: 1.0,
            radius: 0.3,
            lidar_fp,
            camera_fp,
        },
        RobotSpec {
            name: "hsr".into(),
            start: starts[1],
            speed: 0.4,
            turn_rate: 0.8,
            radius: 0.3,
            lidar_fp,
            camera_fp,
        },
    ]
}

/// Scenario for one cell of the apartment experiment matrix.
pub fn apartment_scenario(
    map_path: impl Into<PathBuf>,
    ic: usize,
    layout: usize,
    mode: PlannerMode,
    seed: u64,
) -> Scenario {
    let all = apartment_objects();
    let objects = LAYOUTS[layout].iter().map(|&k| all[k].clone()).collect();
    Scenario {
        map_path: map_path.into(),
        robots: team(&initial_conditions()[ic]),
        objects,
        mode,
        seed,
        tick_dt: 0.2,
        drift: Drift::default_random_walk(),
        detect_prob: 0.8,
        max_ticks: 2400,
        params: SimParams::default(),
    }
}

/// Random apartment: a north–south hallway with rooms on both sides, one door
/// per room and a few mapped furniture blocks. Every room opens onto the hall.
pub fn random_apartment(seed: u64) -> VectorMap {
    random_apartment_with_hall(seed).0
}

/// The random apartment together with a point in the middle of its hallway.
pub fn random_apartment_with_hall(seed: u64) -> (VectorMap, Point2) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Walls::default();
    w.block(0.0, 0.0, APARTMENT_WIDTH, APARTMENT_HEIGHT);
    let hall_w = rng.random_range(2.5..4.0);
    let hall_x = rng.random_range(5.0..APARTMENT_WIDTH - 5.0 - hall_w);
    for (x0, x1, wall_x) in [(0.0, hall_x, hall_x), (hall_x + hall_w, APARTMENT_WIDTH, hall_x + hall_w)] {
        let rooms = rng.random_range(2..=4);
        let mut cuts = vec![0.0];
        for k in 1..rooms {
            let nominal = APARTMENT_HEIGHT * k as f64 / rooms as f64;
            cuts.push(nominal + rng.random_range(-1.5..1.5));
        }
        cuts.push(APARTMENT_HEIGHT);
        let mut doors = Vec::new();
        for pair in cuts.windows(2) {
            let (y0, y1) = (pair[0], pair[1]);
            let d = rng.random_range(y0 + 0.6..y1 - 2.0);
            doors.push((d, d + 1.2));
            // One shallow furniture block against the outer wall.
            let len = rng.random_range(0.8..2.4);
            let fy = rng.random_range(y0 + 0.3..(y1 - 0.3 - len).max(y0 + 0.31));
            let (fx0, fx1) = if x0 == 0.0 { (x0, x0 + 0.5) } else { (x1 - 0.5, x1) };
            if fy + len < y1 - 0.2 {
                w.block(fx0, fy, fx1, fy + len);
            }
        }
        for &y in &cuts[1..cuts.len() - 1] {
            w.horizontal(y, x0, x1, &[]);
        }
        w.vertical(wall_x, 0.0, APARTMENT_HEIGHT, &doors);
    }
    (w.into_map(), Point2::new(hall_x + hall_w / 2.0, APARTMENT_HEIGHT / 2.0))
}
