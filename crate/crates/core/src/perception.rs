//! Per-point lidar classification into long-term (mapped), short-term (static,
//! unmapped) and dynamic features.
//!
//! A point is LTF when its Gaussian likelihood of lying on a map segment clears
//! `ltf_threshold`. The rest are matched against the nearest non-LTF point kept
//! from earlier scans; a good enough match makes it STF, otherwise DF.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{transform_to_global, Point2, Pose2, VectorMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    /// Pose the robot believes it was at when the scan was taken.
    pub pose_estimate: Pose2,
    pub timestamp: f64,
    /// Hit points in the robot frame.
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureClass {
    Ltf,
    Stf,
    Df,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedScan {
    pub scan: LaserScan,
    pub labels: Vec<FeatureClass>,
    pub global_points: Vec<Point2>,
}

impl ClassifiedScan {
    pub fn points_with(&self, class: FeatureClass) -> impl Iterator<Item = Point2> + '_ {
        self.labels
            .iter()
            .zip(&self.global_points)
            .filter(move |(l, _)| **l == class)
            .map(|(_, p)| *p)
    }

    pub fn count(&self, class: FeatureClass) -> usize {
        self.labels.iter().filter(|l| **l == class).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    /// Observation variance in m².
    pub sigma_s: f64,
    pub ltf_threshold: f64,
    pub stf_threshold: f64,
    pub history_horizon: usize,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            sigma_s: 0.0025,
            ltf_threshold: 0.3679,
            stf_threshold: 0.3679,
            history_horizon: 10,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(PerceptionError::InvalidConfig("sigma_s must be positive"));
        }
        if !open_unit(self.ltf_threshold) || !open_unit(self.stf_threshold) {
            return Err(PerceptionError::InvalidConfig(
                "thresholds must lie in (0, 1)",
            ));
        }
        if self.history_horizon == 0 {
            return Err(PerceptionError::InvalidConfig(
                "history_horizon must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct HistoryEntry {
    timestamp: f64,
    points: Vec<Point2>,
}

type CellKey = (i64, i64);

/// Bounded ring of recent non-LTF points with a uniform hash grid for
/// exact nearest-neighbour lookup.
#[derive(Debug, Clone)]
pub struct ScanHistory {
    capacity: usize,
    cell_size: f64,
    entries: VecDeque<HistoryEntry>,
    grid: HashMap<CellKey, Vec<Point2>>,
    total_points: usize,
}

impl ScanHistory {
    /// `cell_size` is normally `2·√sigma_s`.
    pub fn new(capacity: usize, cell_size: f64) -> Self {
        assert!(capacity >= 1, "history capacity must be at least 1");
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            capacity,
            cell_size,
            entries: VecDeque::with_capacity(capacity + 1),
            grid: HashMap::new(),
            total_points: 0,
        }
    }

    pub fn for_config(cfg: &PerceptionConfig) -> Self {
        Self::new(cfg.history_horizon, 2.0 * cfg.sigma_s.sqrt())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_points == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn point_count(&self) -> usize {
        self.total_points
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.entries.back().map(|e| e.timestamp)
    }

    /// Appends a scan's non-LTF points, evicting the oldest entry beyond capacity.
    pub fn push(&mut self, timestamp: f64, points: Vec<Point2>) {
        self.entries.push_back(HistoryEntry { timestamp, points });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        self.rebuild_grid();
    }

    fn key(&self, p: Point2) -> CellKey {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
        )
    }

    fn rebuild_grid(&mut self) {
        self.grid.clear();
        self.total_points = 0;
        for entry in &self.entries {
            for &p in &entry.points {
                let k = (
                    (p.x / self.cell_size).floor() as i64,
                    (p.y / self.cell_size).floor() as i64,
                );
                self.grid.entry(k).or_default().push(p);
            }
            self.total_points += entry.points.len();
        }
    }

    fn brute_force_nearest(&self, p: Point2) -> Option<(Point2, f64)> {
        let mut best: Option<(Point2, f64)> = None;
        for q in self.entries.iter().flat_map(|e| e.points.iter()) {
            let d2 = p.distance_squared(*q);
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((*q, d2));
            }
        }
        best
    }

    /// Nearest stored point and its squared distance.
    pub fn nearest(&self, p: Point2) -> Option<(Point2, f64)> {
        if self.total_points == 0 {
            return None;
        }
        let (ci, cj) = self.key(p);
        let mut best: Option<(Point2, f64)> = None;
        let mut ring: i64 = 0;
        loop {
            let side = (2 * ring + 1) as usize;
            if side * side > self.total_points.max(9) {
                return self.brute_force_nearest(p);
            }
            for di in -ring..=ring {
                for dj in -ring..=ring {
                    if di.abs() != ring && dj.abs() != ring {
                        continue;
                    }
                    if let Some(cell) = self.grid.get(&(ci + di, cj + dj)) {
                        for q in cell {
                            let d2 = p.distance_squared(*q);
                            if best.is_none_or(|(_, b)| d2 < b) {
                                best = Some((*q, d2));
                            }
                        }
                    }
                }
            }
            // Anything outside the searched square is at least `ring` cells away.
            let reach = ring as f64 * self.cell_size;
            if let Some((_, d2)) = best {
                if d2 <= reach * reach {
                    return best;
                }
            }
            ring += 1;
        }
    }
}

/// Likelihood that a global point lies on the static map.
pub fn ltf_likelihood(p_global: Point2, map: &VectorMap, sigma_s: f64) -> f64 {
    match map.nearest_distance(p_global) {
        Some(d) => (-(d * d) / sigma_s).exp(),
        None => 0.0,
    }
}

/// Likelihood that a point re-observes a stored non-LTF point, with the match.
pub fn stf_likelihood(
    p_global: Point2,
    history: &ScanHistory,
    sigma_s: f64,
) -> (f64, Option<Point2>) {
    match history.nearest(p_global) {
        Some((q, d2)) => ((-d2 / sigma_s).exp(), Some(q)),
        None => (0.0, None),
    }
}

pub fn classify_scan(
    scan: &LaserScan,
    map: &VectorMap,
    history: &mut ScanHistory,
    cfg: &PerceptionConfig,
) -> Result<ClassifiedScan, PerceptionError> {
    if scan.points.is_empty() {
        return Err(PerceptionError::EmptyScan);
    }
    if let Some(last) = history.last_timestamp() {
        if scan.timestamp <= last {
            return Err(PerceptionError::NonIncreasingTimestamp {
                previous: last,
                current: scan.timestamp,
            });
        }
    }
    let mut labels = Vec::with_capacity(scan.points.len());
    let mut global_points = Vec::with_capacity(scan.points.len());
    let mut unmapped = Vec::new();
    for &p in &scan.points {
        let g = transform_to_global(&scan.pose_estimate, p);
        let label = if ltf_likelihood(g, map, cfg.sigma_s) > cfg.ltf_threshold {
            FeatureClass::Ltf
        } else {
            unmapped.push(g);
            if stf_likelihood(g, history, cfg.sigma_s).0 > cfg.stf_threshold {
                FeatureClass::Stf
            } else {
                FeatureClass::Df
            }
        };
        labels.push(label);
        global_points.push(g);
    }
    history.push(scan.timestamp, unmapped);
    Ok(ClassifiedScan {
        scan: scan.clone(),
        labels,
        global_points,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("scan timestamp {current} does not follow {previous}")]
    NonIncreasingTimestamp { previous: f64, current: f64 },
    #[error("scan has no points")]
    EmptyScan,
    #[error("invalid perception config: {0}")]
    InvalidConfig(&'static str),
}
