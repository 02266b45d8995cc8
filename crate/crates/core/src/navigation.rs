//! Grid A* navigation with exact wall clearance.
//!
//! Cells are free when their centre keeps `clearance` from every wall; a move
//! between neighbouring cells is allowed only if the whole straight leg keeps
//! that clearance too. Routes are string-pulled before execution.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use crate::geometry::{dist_segment_segment, normalize_angle, Point2, Pose2, VectorMap};
use crate::search_map::{GridSpec, SearchMapError};

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Heading error above which the robot turns in place instead of translating.
const ALIGN_TOL: f64 = 0.35;
/// Ticks of blocked translation before a target is declared unreachable.
const STALL_LIMIT: usize = 25;

#[derive(Debug)]
pub struct NavGrid {
    grid: GridSpec,
    clearance: f64,
    /// Distance from each cell centre to the nearest wall (∞ for empty maps).
    wall_distance: Vec<f64>,
    map: Arc<VectorMap>,
}

impl NavGrid {
    pub fn new(map: Arc<VectorMap>, resolution: f64, clearance: f64) -> Result<Self, SearchMapError> {
        let grid = GridSpec::covering(&map, resolution)?;
        let mut wall_distance = vec![f64::INFINITY; grid.len()];
        // Only cells near a wall can be blocked; farther cells keep a lower bound.
        let reach = clearance + 2.0 * resolution;
        for s in map.segments() {
            let lo = s.min_corner() - Point2::new(reach, reach);
            let hi = s.max_corner() + Point2::new(reach, reach);
            if let Some(((i0, j0), (i1, j1))) = grid.cell_range(lo, hi) {
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let idx = grid.index(i, j);
                        let d = crate::geometry::dist_point_segment(grid.center(i, j), s);
                        if d < wall_distance[idx] {
                            wall_distance[idx] = d;
                        }
                    }
                }
            }
        }
        Ok(Self {
            grid,
            clearance,
            wall_distance,
            map,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn map(&self) -> &VectorMap {
        &self.map
    }

    pub fn is_free(&self, index: usize) -> bool {
        self.wall_distance[index] >= self.clearance
    }

    /// True when `p` keeps the clearance from every wall.
    pub fn point_clear(&self, p: Point2) -> bool {
        self.map
            .nearest_distance(p)
            .is_none_or(|d| d >= self.clearance)
    }

    /// True when every point of the leg `a`–`b` keeps the clearance.
    pub fn leg_clear(&self, a: Point2, b: Point2) -> bool {
        let r = self.clearance;
        let lo = Point2::new(a.x.min(b.x) - r, a.y.min(b.y) - r);
        let hi = Point2::new(a.x.max(b.x) + r, a.y.max(b.y) + r);
        self.map
            .segments_in_box(lo, hi)
            .iter()
            .all(|s| dist_segment_segment(a, b, s) >= r)
    }

    fn edge_ok(&self, a: usize, b: usize, diagonal: bool) -> bool {
        if !self.is_free(b) {
            return false;
        }
        let half = 0.5 * self.grid.resolution * if diagonal { SQRT2 } else { 1.0 };
        let margin = self.wall_distance[a].min(self.wall_distance[b]);
        margin >= self.clearance + half
            || self.leg_clear(self.grid.center_of(a), self.grid.center_of(b))
    }

    fn neighbours(&self, index: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        let w = self.grid.width as i64;
        let h = self.grid.height as i64;
        let i = (index % self.grid.width) as i64;
        let j = (index / self.grid.width) as i64;
        const STEPS: [(i64, i64); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        STEPS.iter().filter_map(move |&(di, dj)| {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= w || nj >= h {
                return None;
            }
            let diagonal = di != 0 && dj != 0;
            Some(((nj * w + ni) as usize, diagonal))
        })
    }

    fn cell_index(&self, p: Point2) -> Option<usize> {
        self.grid.cell_of(p).map(|(i, j)| self.grid.index(i, j))
    }

    /// Cells reachable from `p` over allowed moves.
    pub fn reachable_from(&self, p: Point2) -> Vec<bool> {
        let mut seen = vec![false; self.grid.len()];
        let Some(start) = self.cell_index(p) else {
            return seen;
        };
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            for (n, diagonal) in self.neighbours(c) {
                if !seen[n] && self.edge_ok(c, n, diagonal) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Nearest free cell to `p` within `radius`, preferring the cell containing `p`.
    fn snap(&self, p: Point2, radius: f64) -> Option<usize> {
        let own = self.cell_index(p)?;
        if self.is_free(own) {
            return Some(own);
        }
        let lo = p - Point2::new(radius, radius);
        let hi = p + Point2::new(radius, radius);
        let ((i0, j0), (i1, j1)) = self.grid.cell_range(lo, hi)?;
        let mut best: Option<(f64, usize)> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let idx = self.grid.index(i, j);
                let d = self.grid.center(i, j).distance(p);
                if d <= radius && self.is_free(idx) && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, idx));
                }
            }
        }
        best.map(|(_, idx)| idx)
    }

    fn astar(&self, start: usize, goal: usize) -> Option<Vec<usize>> {
        let res = self.grid.resolution;
        let gi = (goal % self.grid.width) as f64;
        let gj = (goal / self.grid.width) as f64;
        let heuristic = |c: usize| {
            let di = ((c % self.grid.width) as f64 - gi).abs();
            let dj = ((c / self.grid.width) as f64 - gj).abs();
            res * (di.max(dj) + (SQRT2 - 1.0) * di.min(dj))
        };
        let mut g = vec![f64::INFINITY; self.grid.len()];
        let mut parent = vec![usize::MAX; self.grid.len()];
        let mut closed = vec![false; self.grid.len()];
        // f ≥ 0, so the IEEE bit pattern orders like the value.
        let mut open = BinaryHeap::new();
        g[start] = 0.0;
        open.push(Reverse((heuristic(start).to_bits(), start)));
        while let Some(Reverse((_, c))) = open.pop() {
            if closed[c] {
                continue;
            }
            if c == goal {
                let mut path = vec![c];
                let mut k = c;
                while parent[k] != usize::MAX {
                    k = parent[k];
                    path.push(k);
                }
                path.reverse();
                return Some(path);
            }
            closed[c] = true;
            for (n, diagonal) in self.neighbours(c) {
                if closed[n] || !self.edge_ok(c, n, diagonal) {
                    continue;
                }
                let cost = g[c] + if diagonal { res * SQRT2 } else { res };
                if cost < g[n] {
                    g[n] = cost;
                    parent[n] = c;
                    open.push(Reverse(((cost + heuristic(n)).to_bits(), n)));
                }
            }
        }
        None
    }

    /// Collision-free polyline from `from` to (near) `to`, excluding `from`.
    pub fn route(&self, from: Point2, to: Point2, snap_radius: f64) -> Option<Vec<Point2>> {
        if self.leg_clear(from, to) {
            return Some(vec![to]);
        }
        let start = self.cell_index(from)?;
        let goal = self.snap(to, snap_radius)?;
        let cells = self.astar(start, goal)?;
        let mut pts: Vec<Point2> = cells.iter().map(|&c| self.grid.center_of(c)).collect();
        let last = *pts.last().expect("route has at least one cell");
        if last != to && self.leg_clear(last, to) {
            pts.push(to);
        }
        Some(self.string_pull(from, &pts))
    }

    fn string_pull(&self, from: Point2, pts: &[Point2]) -> Vec<Point2> {
        let mut out = Vec::new();
        let mut anchor = from;
        let mut k = 0;
        while k < pts.len() {
            let mut furthest = k;
            for (m, &p) in pts.iter().enumerate().skip(k + 1) {
                if self.leg_clear(anchor, p) {
                    furthest = m;
                } else {
                    break;
                }
            }
            anchor = pts[furthest];
            out.push(anchor);
            k = furthest + 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    /// Translating or turning toward the target.
    Moving,
    /// At the target position (possibly still turning to its heading).
    AtGoal,
    /// No collision-free route exists; the robot holds position.
    Unreachable,
}

/// Per-robot route follower with a cached route.
#[derive(Debug, Clone)]
pub struct Navigator {
    grid: Arc<NavGrid>,
    route: VecDeque<Point2>,
    goal: Option<Point2>,
    stalled: usize,
    snap_radius: f64,
}

impl Navigator {
    pub fn new(grid: Arc<NavGrid>, snap_radius: f64) -> Self {
        Self {
            grid,
            route: VecDeque::new(),
            goal: None,
            stalled: 0,
            snap_radius,
        }
    }

    pub fn grid(&self) -> &NavGrid {
        &self.grid
    }

    pub fn route(&self) -> impl Iterator<Item = &Point2> {
        self.route.iter()
    }

    /// Advances one tick toward `waypoint` with the given speed and turn-rate limits.
    pub fn step(
        &mut self,
        pose: &Pose2,
        waypoint: &Pose2,
        speed: f64,
        turn_rate: f64,
        dt: f64,
    ) -> (Pose2, StepStatus) {
        let target = waypoint.position();
        if self.goal != Some(target) {
            self.goal = Some(target);
            self.stalled = 0;
            match self.grid.route(pose.position(), target, self.snap_radius) {
                Some(r) => self.route = r.into(),
                None => {
                    self.route.clear();
                    self.goal = None;
                    return (*pose, StepStatus::Unreachable);
                }
            }
        }
        let here = pose.position();
        while self.route.front().is_some_and(|p| p.distance(here) < 1e-9) {
            self.route.pop_front();
        }
        let max_turn = turn_rate * dt;
        let Some(&next) = self.route.front() else {
            let err = normalize_angle(waypoint.theta - pose.theta);
            let theta = pose.theta + err.clamp(-max_turn, max_turn);
            return (Pose2::new(here.x, here.y, theta), StepStatus::AtGoal);
        };
        let delta = next - here;
        let desired = delta.y.atan2(delta.x);
        let err = normalize_angle(desired - pose.theta);
        let turned = err.clamp(-max_turn, max_turn);
        let theta = pose.theta + turned;
        if (err - turned).abs() > ALIGN_TOL {
            return (Pose2::new(here.x, here.y, theta), StepStatus::Moving);
        }
        let dist = delta.norm();
        let travel = (speed * dt).min(dist);
        let moved = if travel >= dist {
            next
        } else {
            here + delta * (travel / dist)
        };
        if !self.grid.leg_clear(here, moved) {
            self.stalled += 1;
            if self.stalled > STALL_LIMIT {
                self.route.clear();
                self.goal = None;
                return (Pose2::new(here.x, here.y, theta), StepStatus::Unreachable);
            }
            return (Pose2::new(here.x, here.y, theta), StepStatus::Moving);
        }
        self.stalled = 0;
        if travel >= dist {
            self.route.pop_front();
        }
        (Pose2::new(moved.x, moved.y, theta), StepStatus::Moving)
    }

    /// Drops the cached route so the next step replans.
    pub fn reset(&mut self) {
        self.route.clear();
        self.goal = None;
        self.stalled = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Bounds, LineSegment};
    use approx::assert_abs_diff_eq;

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> LineSegment {
        LineSegment::new(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap()
    }

    /// Two rooms split at x = 5 with a 1.2 m doorway at y ∈ [4, 5.2].
    fn two_rooms() -> Arc<VectorMap> {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap();
        Arc::new(
            VectorMap::new(
                b,
                vec![
                    seg(0.0, 0.0, 10.0, 0.0),
                    seg(10.0, 0.0, 10.0, 10.0),
                    seg(10.0, 10.0, 0.0, 10.0),
                    seg(0.0, 10.0, 0.0, 0.0),
                    seg(5.0, 0.0, 5.0, 4.0),
                    seg(5.0, 5.2, 5.0, 10.0),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn route_goes_through_doorway() {
        let grid = NavGrid::new(two_rooms(), 0.25, 0.25).unwrap();
        let route = grid
            .route(Point2::new(2.0, 8.0), Point2::new(8.0, 8.0), 0.3)
            .unwrap();
        let mut prev = Point2::new(2.0, 8.0);
        for p in &route {
            assert!(!grid.map().blocks(prev, *p));
            assert!(grid.leg_clear(prev, *p));
            prev = *p;
        }
        assert_eq!(prev, Point2::new(8.0, 8.0));
        assert!(route
            .iter()
            .any(|p| (p.x - 5.0).abs() < 0.5 && p.y > 4.0 && p.y < 5.2));
    }

    #[test]
    fn sealed_room_is_unreachable() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let map = Arc::new(VectorMap::new(b, vec![seg(5.0, 0.0, 5.0, 10.0)]).unwrap());
        let grid = Arc::new(NavGrid::new(map, 0.25, 0.25).unwrap());
        assert!(grid.route(Point2::new(2.0, 5.0), Point2::new(8.0, 5.0), 0.3).is_none());
        let mut nav = Navigator::new(grid, 0.3);
        let pose = Pose2::new(2.0, 5.0, 0.0);
        let (p, status) = nav.step(&pose, &Pose2::new(8.0, 5.0, 0.0), 1.0, 1.0, 0.1);
        assert_eq!(status, StepStatus::Unreachable);
        assert_eq!(p, pose);
    }

    #[test]
    fn straight_step_advances_speed_times_dt() {
        let grid = Arc::new(NavGrid::new(two_rooms(), 0.25, 0.25).unwrap());
        let mut nav = Navigator::new(grid, 0.3);
        let pose = Pose2::new(2.0, 2.0, 0.0);
        let (p, status) = nav.step(&pose, &Pose2::new(3.0, 2.0, 0.0), 1.0, 1.0, 0.1);
        assert_eq!(status, StepStatus::Moving);
        assert_abs_diff_eq!(p.x, 2.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn waypoint_at_current_pose_does_not_move() {
        let grid = Arc::new(NavGrid::new(two_rooms(), 0.25, 0.25).unwrap());
        let mut nav = Navigator::new(grid, 0.3);
        let pose = Pose2::new(2.0, 2.0, 0.4);
        let (p, status) = nav.step(&pose, &pose, 1.0, 1.0, 0.1);
        assert_eq!(status, StepStatus::AtGoal);
        assert_eq!(p, pose);
    }

    #[test]
    fn turns_before_translating() {
        let grid = Arc::new(NavGrid::new(two_rooms(), 0.25, 0.25).unwrap());
        let mut nav = Navigator::new(grid, 0.3);
        let pose = Pose2::new(2.0, 2.0, 0.0);
        let (p, _) = nav.step(&pose, &Pose2::new(1.0, 2.0, 0.0), 1.0, 1.0, 0.1);
        assert_eq!(p.position(), pose.position());
        assert_abs_diff_eq!(p.theta, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn reachability_separates_sealed_rooms() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let map = Arc::new(VectorMap::new(b, vec![seg(5.0, 0.0, 5.0, 10.0)]).unwrap());
        let grid = NavGrid::new(map, 0.5, 0.25).unwrap();
        let seen = grid.reachable_from(Point2::new(1.0, 1.0));
        let (i, j) = grid.grid().cell_of(Point2::new(8.0, 8.0)).unwrap();
        assert!(!seen[grid.grid().index(i, j)]);
        let (i, j) = grid.grid().cell_of(Point2::new(3.0, 8.0)).unwrap();
        assert!(seen[grid.grid().index(i, j)]);
    }
}
