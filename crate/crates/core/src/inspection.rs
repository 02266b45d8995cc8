//! Turns raw short-term-feature points into inspection regions and picks one
//! for a robot to look at.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Point2, Pose2, VectorMap};
use crate::search_map::SearchMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InspectionRegion {
    pub center: Point2,
    pub created_at: f64,
    pub source_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectionConfig {
    pub pool_radius: f64,
    pub ltf_margin: f64,
    /// Distance kept from a region when viewing it.
    pub standoff: f64,
}

impl Default for InspectionConfig {
    fn default() -> Self {
        Self {
            pool_radius: 0.5,
            ltf_margin: 0.3,
            standoff: 1.5,
        }
    }
}

/// A pooled cluster: centroid plus how many raw points it absorbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pooled {
    pub center: Point2,
    pub count: usize,
}

/// Greedy first-come pooling with cluster sizes.
pub fn pool_stfs_counted(points: &[Point2], pool_radius: f64) -> Vec<Pooled> {
    let r2 = pool_radius * pool_radius;
    let mut consumed = vec![false; points.len()];
    let mut out = Vec::new();
    for i in 0..points.len() {
        if consumed[i] {
            continue;
        }
        let seed = points[i];
        let mut sum = Point2::default();
        let mut count = 0usize;
        for (j, &p) in points.iter().enumerate().skip(i) {
            if !consumed[j] && p.distance_squared(seed) <= r2 {
                consumed[j] = true;
                sum = sum + p;
                count += 1;
            }
        }
        out.push(Pooled {
            center: sum * (1.0 / count as f64),
            count,
        });
    }
    out
}

pub fn pool_stfs(points: &[Point2], pool_radius: f64) -> Vec<Point2> {
    pool_stfs_counted(points, pool_radius)
        .into_iter()
        .map(|p| p.center)
        .collect()
}

/// Drops pooled points near mapped walls or inside visually observed cells.
pub fn filter_regions(
    pooled: &[Pooled],
    map: &VectorMap,
    sm: &SearchMap,
    cfg: &InspectionConfig,
    now: f64,
) -> Vec<InspectionRegion> {
    pooled
        .iter()
        .filter(|p| {
            map.nearest_distance(p.center)
                .is_none_or(|d| d >= cfg.ltf_margin)
        })
        .filter(|p| !sm.is_visually_observed(p.center))
        .map(|p| InspectionRegion {
            center: p.center,
            created_at: now,
            source_count: p.count,
        })
        .collect()
}

fn region_order(pose: Point2, a: &InspectionRegion, b: &InspectionRegion) -> Ordering {
    a.center
        .distance_squared(pose)
        .total_cmp(&b.center.distance_squared(pose))
        .then(a.created_at.total_cmp(&b.created_at))
        .then(a.center.x.total_cmp(&b.center.x))
        .then(a.center.y.total_cmp(&b.center.y))
}

pub fn select_nearest(regions: &[InspectionRegion], pose: &Pose2) -> Option<InspectionRegion> {
    let p = pose.position();
    regions.iter().copied().min_by(|a, b| region_order(p, a, b))
}

/// Viewing pose `standoff` short of the region on the line from the robot, facing it.
pub fn region_to_priority_waypoint(region: &InspectionRegion, pose: &Pose2, standoff: f64) -> Pose2 {
    let here = pose.position();
    let to_center = region.center - here;
    let dist = to_center.norm();
    let heading = if dist > 0.0 {
        to_center.y.atan2(to_center.x)
    } else {
        pose.theta
    };
    if dist <= standoff {
        return Pose2::new(here.x, here.y, heading);
    }
    let back = standoff.max(0.0);
    let p = region.center - to_center * (back / dist);
    Pose2::new(p.x, p.y, normalize_angle(heading))
}
