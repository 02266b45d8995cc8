//! Multi-robot coverage planning.
//!
//! Viewpoints are picked by greedy set cover over randomly sampled candidate
//! poses, split between robots with a size-balanced k-means, and ordered per
//! robot by nearest neighbour followed by 2-opt.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2, VectorMap};
use crate::navigation::NavGrid;
use crate::search_map::{GridSpec, PlacedFootprint, SearchMap, SearchMapError, SensorFootprint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerMode {
    LidarCPP,
    VisualCPP,
    LidarCPPLive,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 3] = [
        PlannerMode::LidarCPP,
        PlannerMode::VisualCPP,
        PlannerMode::LidarCPPLive,
    ];

    pub fn short_name(&self) -> &'static str {
        match self {
            PlannerMode::LidarCPP => "lidar",
            PlannerMode::VisualCPP => "visual",
            PlannerMode::LidarCPPLive => "live",
        }
    }

    pub fn uses_live(&self) -> bool {
        matches!(self, PlannerMode::LidarCPPLive)
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for PlannerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lidar" | "LidarCPP" => Ok(PlannerMode::LidarCPP),
            "visual" | "VisualCPP" => Ok(PlannerMode::VisualCPP),
            "live" | "LidarCPPLive" => Ok(PlannerMode::LidarCPPLive),
            other => Err(format!("unknown planner mode {other:?} (expected lidar|visual|live)")),
        }
    }
}

fn default_radius() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub name: String,
    pub start: Pose2,
    /// m/s
    pub speed: f64,
    /// rad/s
    pub turn_rate: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub lidar_fp: SensorFootprint,
    pub camera_fp: SensorFootprint,
}

impl RobotSpec {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |why: &str| Err(PlanError::InvalidRobot(self.name.clone(), why.to_string()));
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("speed must be positive");
        }
        if !(self.turn_rate > 0.0 && self.turn_rate.is_finite()) {
            return bad("turn_rate must be positive");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !matches!(self.lidar_fp, SensorFootprint::Rectangular { .. }) {
            return bad("lidar footprint must be rectangular");
        }
        if !matches!(self.camera_fp, SensorFootprint::Triangular { .. }) {
            return bad("camera footprint must be triangular");
        }
        self.lidar_fp.validate()?;
        self.camera_fp.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub resolution: f64,
    pub sample_budget: usize,
    /// Camera headings tried per visual candidate position.
    pub visual_headings: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 0.25,
            sample_budget: 5000,
            visual_headings: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveragePlan {
    pub viewpoints: Vec<Vec<Pose2>>,
    pub planned_length: Vec<f64>,
    pub covered_fraction: f64,
}

impl CoveragePlan {
    pub fn total_length(&self) -> f64 {
        self.planned_length.iter().sum()
    }

    pub fn viewpoint_count(&self) -> usize {
        self.viewpoints.iter().map(Vec::len).sum()
    }

    /// One line per viewpoint: `robot_index x y theta`.
    pub fn to_plan_file(&self) -> String {
        let mut out = String::new();
        for (r, vps) in self.viewpoints.iter().enumerate() {
            for v in vps {
                out.push_str(&format!("{} {} {} {}\n", r, v.x, v.y, v.theta));
            }
        }
        out
    }

    /// Parses a plan file back into per-robot viewpoint lists.
    pub fn parse_plan_file(text: &str, robots: usize) -> Result<Vec<Vec<Pose2>>, PlanError> {
        let mut out = vec![Vec::new(); robots];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(' ').collect();
            let err = || PlanError::PlanFile(n + 1);
            if f.len() != 4 {
                return Err(err());
            }
            let r: usize = f[0].parse().map_err(|_| err())?;
            let nums: Result<Vec<f64>, _> = f[1..].iter().map(|t| t.parse::<f64>()).collect();
            let nums = nums.map_err(|_| err())?;
            out.get_mut(r)
                .ok_or_else(err)?
                .push(Pose2::new(nums[0], nums[1], nums[2]));
        }
        Ok(out)
    }
}

pub fn path_length(poses: &[Pose2]) -> f64 {
    poses
        .windows(2)
        .map(|w| w[0].position().distance(w[1].position()))
        .sum()
}

struct FreeCells {
    grid: GridSpec,
    free: Vec<bool>,
    count: usize,
}

impl FreeCells {
    fn new(map: &VectorMap, resolution: f64) -> Result<Self, PlanError> {
        let sm = SearchMap::new(Arc::new(map.clone()), resolution)?;
        let free: Vec<bool> = sm.occupancy().iter().map(|&m| m != 1.0).collect();
        let count = free.iter().filter(|&&f| f).count();
        Ok(Self {
            grid: *sm.grid(),
            free,
            count,
        })
    }

    fn covered_by(&self, pose: &Pose2, fp: &SensorFootprint, map: &VectorMap) -> Vec<u32> {
        let placed = PlacedFootprint::new(fp, pose, map);
        let mut cells = self.grid.visible_cells(&placed);
        cells.retain(|&c| self.free[c as usize]);
        cells
    }
}

/// Fraction of free cells seen by at least one viewpoint's occlusion-aware footprint.
pub fn coverage_fraction(
    viewpoints: &[Vec<Pose2>],
    footprint: &SensorFootprint,
    map: &VectorMap,
    resolution: f64,
) -> Result<f64, PlanError> {
    let cells = FreeCells::new(map, resolution)?;
    if cells.count == 0 {
        return Ok(0.0);
    }
    let mut covered = vec![false; cells.grid.len()];
    for v in viewpoints.iter().flatten() {
        for c in cells.covered_by(v, footprint, map) {
            covered[c as usize] = true;
        }
    }
    Ok(covered.iter().filter(|&&c| c).count() as f64 / cells.count as f64)
}

pub fn plan_coverage(
    map: &VectorMap,
    robots: &[RobotSpec],
    mode: PlannerMode,
    target_coverage: f64,
    seed: u64,
) -> Result<CoveragePlan, PlanError> {
    plan_coverage_with(map, robots, mode, target_coverage, seed, &PlannerConfig::default())
}

/// The footprint of the first robot is used for every candidate; teams are
/// expected to carry comparable sensors.
pub fn plan_coverage_with(
    map: &VectorMap,
    robots: &[RobotSpec],
    mode: PlannerMode,
    target_coverage: f64,
    seed: u64,
    cfg: &PlannerConfig,
) -> Result<CoveragePlan, PlanError> {
    if robots.is_empty() {
        return Err(PlanError::NoRobots);
    }
    if !(target_coverage > 0.0 && target_coverage <= 1.0) {
        return Err(PlanError::InvalidTarget(target_coverage));
    }
    for r in robots {
        r.validate()?;
    }
    let cells = FreeCells::new(map, cfg.resolution)?;
    if cells.count == 0 {
        return Err(PlanError::NoFreeSpace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = sample_candidates(map, robots, cfg, &mut rng)?;

    let (footprint, headings): (SensorFootprint, Vec<f64>) = match mode {
        PlannerMode::LidarCPP | PlannerMode::LidarCPPLive => (robots[0].lidar_fp, vec![0.0]),
        PlannerMode::VisualCPP => {
            let n = cfg.visual_headings.max(1);
            let hs = (0..n)
                .map(|k| std::f64::consts::TAU * k as f64 / n as f64)
                .collect();
            (robots[0].camera_fp, hs)
        }
    };

    let mut options: Vec<(Pose2, Vec<u32>)> = Vec::with_capacity(candidates.len() * headings.len());
    for p in &candidates {
        for &h in &headings {
            let pose = Pose2::new(p.x, p.y, h);
            let covered = cells.covered_by(&pose, &footprint, map);
            options.push((pose, covered));
        }
    }

    let kept = greedy_cover(&options, &cells, target_coverage)?;
    let points: Vec<Pose2> = kept.iter().map(|&i| options[i].0).collect();
    let mut covered = vec![false; cells.grid.len()];
    for &i in &kept {
        for &c in &options[i].1 {
            covered[c as usize] = true;
        }
    }
    let covered_fraction = covered.iter().filter(|&&c| c).count() as f64 / cells.count as f64;

    let groups = partition(&points, robots, &mut rng);
    let mut viewpoints = Vec::with_capacity(robots.len());
    let mut planned_length = Vec::with_capacity(robots.len());
    for (robot, group) in robots.iter().zip(groups) {
        let ordered = two_opt(nearest_neighbour_order(robot.start.position(), group));
        planned_length.push(path_length(&ordered));
        viewpoints.push(ordered);
    }
    Ok(CoveragePlan {
        viewpoints,
        planned_length,
        covered_fraction,
    })
}

fn sample_candidates(
    map: &VectorMap,
    robots: &[RobotSpec],
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point2>, PlanError> {
    let clearance = robots.iter().map(|r| r.radius).fold(0.0, f64::max);
    let nav = NavGrid::new(Arc::new(map.clone()), cfg.resolution, clearance)?;
    let mut reachable = vec![false; nav.grid().len()];
    for r in robots {
        for (slot, seen) in reachable.iter_mut().zip(nav.reachable_from(r.start.position())) {
            *slot |= seen;
        }
    }
    let b = *map.bounds();
    let mut out = Vec::with_capacity(cfg.sample_budget);
    let max_attempts = cfg.sample_budget.saturating_mul(50);
    let mut attempts = 0;
    while out.len() < cfg.sample_budget && attempts < max_attempts {
        attempts += 1;
        let p = Point2::new(
            rng.random_range(b.min.x..b.max.x),
            rng.random_range(b.min.y..b.max.y),
        );
        let Some((i, j)) = nav.grid().cell_of(p) else {
            continue;
        };
        if reachable[nav.grid().index(i, j)] && nav.point_clear(p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        return Err(PlanError::NoFreeSpace);
    }
    Ok(out)
}

/// Exact greedy set cover with lazy gain re-evaluation; ties go to the lower index.
fn greedy_cover(
    options: &[(Pose2, Vec<u32>)],
    cells: &FreeCells,
    target: f64,
) -> Result<Vec<usize>, PlanError> {
    let needed = target * cells.count as f64;
    let mut covered = vec![false; cells.grid.len()];
    let mut covered_count = 0usize;
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = options
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| !c.is_empty())
        .map(|(i, (_, c))| (c.len(), Reverse(i)))
        .collect();
    let mut kept = Vec::new();
    while (covered_count as f64) < needed - 1e-9 {
        let Some((_, Reverse(i))) = heap.pop() else {
            return Err(PlanError::CoverageUnreachable {
                achieved: covered_count as f64 / cells.count as f64,
                target,
            });
        };
        let gain = options[i].1.iter().filter(|&&c| !covered[c as usize]).count();
        if gain == 0 {
            continue;
        }
        let fresh = (gain, Reverse(i));
        if heap.peek().is_none_or(|top| fresh >= *top) {
            for &c in &options[i].1 {
                if !covered[c as usize] {
                    covered[c as usize] = true;
                    covered_count += 1;
                }
            }
            kept.push(i);
        } else {
            heap.push(fresh);
        }
    }
    Ok(kept)
}

/// Size-balanced k-means (cluster sizes differ by at most one), then a
/// one-to-one cluster→robot assignment by start distance.
fn partition(points: &[Pose2], robots: &[RobotSpec], rng: &mut ChaCha8Rng) -> Vec<Vec<Pose2>> {
    let k = robots.len();
    if k == 1 {
        return vec![points.to_vec()];
    }
    let n = points.len();
    let pos: Vec<Point2> = points.iter().map(Pose2::position).collect();
    let mut groups = vec![Vec::new(); k];
    if n == 0 {
        return groups;
    }

    // Farthest-first initialisation from a random first centre.
    let mut centroids = vec![pos[rng.random_range(0..n)]];
    while centroids.len() < k.min(n) {
        let far = (0..n)
            .max_by(|&a, &b| {
                let da = centroids.iter().map(|c| c.distance_squared(pos[a])).fold(f64::INFINITY, f64::min);
                let db = centroids.iter().map(|c| c.distance_squared(pos[b])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("non-empty");
        centroids.push(pos[far]);
    }
    let kc = centroids.len();
    let capacity = n.div_ceil(kc);

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * kc);
        for (i, p) in pos.iter().enumerate() {
            for (c, centre) in centroids.iter().enumerate() {
                pairs.push((p.distance_squared(*centre), i, c));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = vec![usize::MAX; n];
        let mut sizes = vec![0usize; kc];
        for (_, i, c) in pairs {
            if next[i] == usize::MAX && sizes[c] < capacity {
                next[i] = c;
                sizes[c] += 1;
            }
        }
        let changed = next != assignment;
        assignment = next;
        for (c, centre) in centroids.iter_mut().enumerate() {
            let members: Vec<Point2> = (0..n).filter(|&i| assignment[i] == c).map(|i| pos[i]).collect();
            if !members.is_empty() {
                let sum = members.iter().fold(Point2::default(), |acc, &p| acc + p);
                *centre = sum * (1.0 / members.len() as f64);
            }
        }
        if !changed {
            break;
        }
    }

    // One-to-one assignment of clusters to robots, nearest start first.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (c, centre) in centroids.iter().enumerate() {
        for (r, robot) in robots.iter().enumerate() {
            pairs.push((robot.start.position().distance(*centre), r, c));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut robot_of = vec![usize::MAX; kc];
    let mut taken = vec![false; k];
    for (_, r, c) in pairs {
        if robot_of[c] == usize::MAX && !taken[r] {
            robot_of[c] = r;
            taken[r] = true;
        }
    }
    for (i, p) in points.iter().enumerate() {
        groups[robot_of[assignment[i]]].push(*p);
    }
    groups
}

fn nearest_neighbour_order(start: Point2, mut remaining: Vec<Pose2>) -> Vec<Pose2> {
    let mut out = Vec::with_capacity(remaining.len());
    let mut here = start;
    while !remaining.is_empty() {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| {
                a.position()
                    .distance_squared(here)
                    .total_cmp(&b.position().distance_squared(here))
                    .then(ia.cmp(ib))
            })
            .expect("non-empty");
        let next = remaining.remove(idx);
        here = next.position();
        out.push(next);
    }
    out
}

/// Open-path 2-opt keeping the first viewpoint fixed; best improvement per pass.
pub(crate) fn two_opt(mut tour: Vec<Pose2>) -> Vec<Pose2> {
    let n = tour.len();
    if n < 3 {
        return tour;
    }
    let d = |a: &Pose2, b: &Pose2| a.position().distance(b.position());
    loop {
        let mut best = (0.0, 0, 0);
        for i in 1..n - 1 {
            for j in i + 1..n {
                let before = d(&tour[i - 1], &tour[i]);
                let after = d(&tour[i - 1], &tour[j]);
                let (tail_before, tail_after) = if j + 1 < n {
                    (d(&tour[j], &tour[j + 1]), d(&tour[i], &tour[j + 1]))
                } else {
                    (0.0, 0.0)
                };
                let delta = after + tail_after - before - tail_before;
                if delta < best.0 {
                    best = (delta, i, j);
                }
            }
        }
        if best.0 > -1e-9 {
            return tour;
        }
        tour[best.1..=best.2].reverse();
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no robots to plan for")]
    NoRobots,
    #[error("target coverage must be in (0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("robot {0}: {1}")]
    InvalidRobot(String, String),
    #[error("map has no reachable free space")]
    NoFreeSpace,
    #[error("sample budget exhausted at coverage {achieved:.3} (target {target})")]
    CoverageUnreachable { achieved: f64, target: f64 },
    #[error("malformed plan file at line {0}")]
    PlanFile(usize),
    #[error(transparent)]
    Grid(#[from] SearchMapError),
}
