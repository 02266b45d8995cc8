use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::WorldObject;
use crate::geometry::{
    ray_segment_intersection, segments_intersect, LineSegment, Point2, Pose2, VectorMap,
};
use crate::navigation::{NavGrid, Navigator, StepStatus};
use crate::perception::LaserScan;
use crate::planner::RobotSpec;
use crate::search_map::SensorFootprint;

/// What a simulated beam hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HitSource {
    Map,
    Object(usize),
}

/// Flat list of ray-castable segments, each tagged with its source.
#[derive(Debug, Clone, Default)]
pub struct Occluders {
    segments: Vec<LineSegment>,
    tags: Vec<HitSource>,
}

impl Occluders {
    pub fn from_world(map: &VectorMap, objects: &[WorldObject]) -> Self {
        let mut occ = Occluders::default();
        occ.extend(HitSource::Map, map.segments().iter().copied());
        for (k, o) in objects.iter().enumerate() {
            occ.extend(HitSource::Object(k), o.outline());
        }
        occ
    }

    pub fn extend(&mut self, tag: HitSource, segs: impl IntoIterator<Item = LineSegment>) {
        for s in segs {
            self.segments.push(s);
            self.tags.push(tag);
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    fn cast(&self, origin: Point2, angle: f64, max_range: f64) -> Option<(f64, HitSource)> {
        let dir = Point2::new(angle.cos(), angle.sin());
        let mut best: Option<(f64, HitSource)> = None;
        for (s, &tag) in self.segments.iter().zip(&self.tags) {
            if let Some(t) = ray_segment_intersection(origin, dir, s) {
                if t <= max_range && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, tag));
                }
            }
        }
        best
    }
}

/// Scan from `true_pose` with per-point hit sources; the scan carries `believed_pose`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_lidar_labeled<R: Rng + ?Sized>(
    occluders: &Occluders,
    true_pose: &Pose2,
    believed_pose: &Pose2,
    n_beams: usize,
    max_range: f64,
    range_noise_std: f64,
    timestamp: f64,
    rng: &mut R,
) -> (LaserScan, Vec<HitSource>) {
    let noise = (range_noise_std > 0.0).then(|| Normal::new(0.0, range_noise_std).expect("finite std"));
    let origin = true_pose.position();
    let mut points = Vec::with_capacity(n_beams);
    let mut sources = Vec::with_capacity(n_beams);
    for k in 0..n_beams {
        let bearing = std::f64::consts::TAU * k as f64 / n_beams as f64;
        let Some((range, tag)) = occluders.cast(origin, true_pose.theta + bearing, max_range) else {
            continue;
        };
        let r = match &noise {
            Some(n) => (range + n.sample(rng)).max(0.0),
            None => range,
        };
        points.push(Point2::new(r * bearing.cos(), r * bearing.sin()));
        sources.push(tag);
    }
    let scan = LaserScan {
        pose_estimate: *believed_pose,
        timestamp,
        points,
    };
    (scan, sources)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_lidar<R: Rng + ?Sized>(
    map: &VectorMap,
    objects: &[WorldObject],
    true_pose: &Pose2,
    believed_pose: &Pose2,
    n_beams: usize,
    max_range: f64,
    range_noise_std: f64,
    timestamp: f64,
    rng: &mut R,
) -> LaserScan {
    let occ = Occluders::from_world(map, objects);
    simulate_lidar_labeled(&occ, true_pose, believed_pose, n_beams, max_range, range_noise_std, timestamp, rng).0
}

/// Indices of objects whose centre is inside the camera footprint with a clear line of sight.
pub fn camera_candidates(
    map: &VectorMap,
    objects: &[WorldObject],
    pose: &Pose2,
    camera_fp: &SensorFootprint,
) -> Vec<usize> {
    let eye = pose.position();
    objects
        .iter()
        .enumerate()
        .filter(|(_, o)| camera_fp.contains(pose, o.center))
        .filter(|(_, o)| !map.blocks(eye, o.center))
        .filter(|&(k, o)| {
            objects.iter().enumerate().all(|(m, other)| {
                m == k || !other.outline().iter().any(|s| segments_intersect(eye, o.center, s.a, s.b))
            })
        })
        .map(|(k, _)| k)
        .collect()
}

/// Each candidate is reported independently with probability `detect_prob`.
pub fn camera_detect<R: Rng + ?Sized>(
    map: &VectorMap,
    objects: &[WorldObject],
    pose: &Pose2,
    camera_fp: &SensorFootprint,
    detect_prob: f64,
    rng: &mut R,
) -> Vec<String> {
    camera_candidates(map, objects, pose, camera_fp)
        .into_iter()
        .filter(|_| rng.random::<f64>() < detect_prob)
        .map(|k| objects[k].id.clone())
        .collect()
}

/// One navigation step on a freshly built grid. Trials keep a `Navigator` per
/// robot instead, which caches the route between ticks.
pub fn step_robot(
    spec: &RobotSpec,
    true_pose: &Pose2,
    waypoint: &Pose2,
    map: &VectorMap,
    tick_dt: f64,
) -> (Pose2, StepStatus) {
    let Ok(grid) = NavGrid::new(Arc::new(map.clone()), 0.25, spec.radius) else {
        return (*true_pose, StepStatus::Unreachable);
    };
    let mut nav = Navigator::new(Arc::new(grid), 1.0);
    nav.step(true_pose, waypoint, spec.speed, spec.turn_rate, tick_dt)
}
