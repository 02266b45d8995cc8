//! Occupancy grid used as the shared search belief.
//!
//! Cells start at 0.5, cells crossed by a wall start at 1.0, and a cell drops
//! to 0.0 once a sensor footprint has seen it with a clear line of sight. The
//! grid's Shannon entropy (in bits) measures how much is left to search.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_in_convex_polygon, LineSegment, Point2, Pose2, VectorMap};

pub const MAX_CELLS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum SensorFootprint {
    /// Lidar costmap window centred on the robot; `length` runs along the heading.
    Rectangular { length: f64, width: f64 },
    /// Camera view cone with its apex at the robot; the far edge is `range` ahead.
    Triangular { range: f64, half_angle: f64 },
}

impl SensorFootprint {
    pub fn validate(&self) -> Result<(), SearchMapError> {
        let ok = match *self {
            SensorFootprint::Rectangular { length, width } => length > 0.0 && width > 0.0,
            SensorFootprint::Triangular { range, half_angle } => {
                range > 0.0 && half_angle > 0.0 && half_angle < std::f64::consts::FRAC_PI_2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SearchMapError::InvalidFootprint(*self))
        }
    }

    pub fn is_visual(&self) -> bool {
        matches!(self, SensorFootprint::Triangular { .. })
    }

    /// Footprint outline in global coordinates.
    pub fn polygon(&self, pose: &Pose2) -> Vec<Point2> {
        let local = match *self {
            SensorFootprint::Rectangular { length, width } => {
                let (hl, hw) = (length / 2.0, width / 2.0);
                vec![
                    Point2::new(-hl, -hw),
                    Point2::new(hl, -hw),
                    Point2::new(hl, hw),
                    Point2::new(-hl, hw),
                ]
            }
            SensorFootprint::Triangular { range, half_angle } => {
                let spread = range * half_angle.tan();
                vec![
                    Point2::new(0.0, 0.0),
                    Point2::new(range, -spread),
                    Point2::new(range, spread),
                ]
            }
        };
        local
            .into_iter()
            .map(|p| crate::geometry::transform_to_global(pose, p))
            .collect()
    }

    pub fn contains(&self, pose: &Pose2, p: Point2) -> bool {
        point_in_convex_polygon(p, &self.polygon(pose))
    }
}

/// Pre-computed outline of a footprint at a pose, plus the walls that can occlude it.
pub(crate) struct PlacedFootprint {
    pub origin: Point2,
    pub polygon: Vec<Point2>,
    pub lo: Point2,
    pub hi: Point2,
    pub occluders: Vec<LineSegment>,
}

impl PlacedFootprint {
    pub fn new(fp: &SensorFootprint, pose: &Pose2, map: &VectorMap) -> Self {
        let polygon = fp.polygon(pose);
        let origin = pose.position();
        let mut lo = origin;
        let mut hi = origin;
        for v in &polygon {
            lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        let occluders = map.segments_in_box(lo, hi);
        Self {
            origin,
            polygon,
            lo,
            hi,
            occluders,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        point_in_convex_polygon(p, &self.polygon)
    }

    pub fn visible(&self, p: Point2) -> bool {
        !self
            .occluders
            .iter()
            .any(|s| crate::geometry::segments_intersect(self.origin, p, s.a, s.b))
    }
}

/// Uniform grid geometry shared by the search map and the planner's coverage audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn covering(map: &VectorMap, resolution: f64) -> Result<Self, SearchMapError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(SearchMapError::InvalidResolution(resolution));
        }
        let b = map.bounds();
        let width = (b.width() / resolution - 1e-9).ceil().max(1.0);
        let height = (b.height() / resolution - 1e-9).ceil().max(1.0);
        if width * height > MAX_CELLS as f64 {
            return Err(SearchMapError::TooManyCells {
                cells: (width * height) as u64,
            });
        }
        Ok(Self {
            origin: b.min,
            resolution,
            width: width as usize,
            height: height as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn center_of(&self, index: usize) -> Point2 {
        self.center(index % self.width, index / self.width)
    }

    /// Cell containing `p`; points on the far edge belong to the last cell.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.resolution;
        let fy = (p.y - self.origin.y) / self.resolution;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.width as f64 && fy <= self.height as f64) {
            return None;
        }
        Some((
            (fx.floor() as usize).min(self.width - 1),
            (fy.floor() as usize).min(self.height - 1),
        ))
    }

    /// Inclusive cell-index range overlapping the rectangle, clamped to the grid.
    pub fn cell_range(&self, lo: Point2, hi: Point2) -> Option<((usize, usize), (usize, usize))> {
        if hi.x < self.origin.x
            || hi.y < self.origin.y
            || lo.x > self.origin.x + self.width as f64 * self.resolution
            || lo.y > self.origin.y + self.height as f64 * self.resolution
        {
            return None;
        }
        let clamp = |v: f64, o: f64, n: usize| {
            (((v - o) / self.resolution).floor() as i64).clamp(0, n as i64 - 1) as usize
        };
        Some((
            (
                clamp(lo.x, self.origin.x, self.width),
                clamp(lo.y, self.origin.y, self.height),
            ),
            (
                clamp(hi.x, self.origin.x, self.width),
                clamp(hi.y, self.origin.y, self.height),
            ),
        ))
    }

    /// Indices of cells whose centres fall inside the footprint and are visible from its apex.
    pub(crate) fn visible_cells(&self, placed: &PlacedFootprint) -> Vec<u32> {
        let mut out = Vec::new();
        if let Some(((i0, j0), (i1, j1))) = self.cell_range(placed.lo, placed.hi) {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = self.center(i, j);
                    if placed.contains(c) && placed.visible(c) {
                        out.push(self.index(i, j) as u32);
                    }
                }
            }
        }
        out
    }
}

/// Closed segment vs. closed axis-aligned box (Liang–Barsky clipping).
fn segment_touches_box(s: &LineSegment, lo: Point2, hi: Point2) -> bool {
    let d = s.direction();
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-d.x, s.a.x - lo.x),
        (d.x, hi.x - s.a.x),
        (-d.y, s.a.y - lo.y),
        (d.y, hi.y - s.a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct SearchMap {
    grid: GridSpec,
    occupancy: Vec<f64>,
    visual_mask: Vec<bool>,
    map: Arc<VectorMap>,
}

impl SearchMap {
    pub fn new(map: Arc<VectorMap>, resolution: f64) -> Result<Self, SearchMapError> {
        let grid = GridSpec::covering(&map, resolution)?;
        let mut occupancy = vec![0.5; grid.len()];
        for s in map.segments() {
            let lo = s.min_corner();
            let hi = s.max_corner();
            if let Some(((i0, j0), (i1, j1))) = grid.cell_range(lo, hi) {
                // Extend by one cell so walls on cell boundaries mark both neighbours.
                let i0 = i0.saturating_sub(1);
                let j0 = j0.saturating_sub(1);
                let i1 = (i1 + 1).min(grid.width - 1);
                let j1 = (j1 + 1).min(grid.height - 1);
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let clo = Point2::new(
                            grid.origin.x + i as f64 * grid.resolution,
                            grid.origin.y + j as f64 * grid.resolution,
                        );
                        let chi = Point2::new(clo.x + grid.resolution, clo.y + grid.resolution);
                        if segment_touches_box(s, clo, chi) {
                            occupancy[grid.index(i, j)] = 1.0;
                        }
                    }
                }
            }
        }
        let visual_mask = vec![false; grid.len()];
        Ok(Self {
            grid,
            occupancy,
            visual_mask,
            map,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn origin(&self) -> Point2 {
        self.grid.origin
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn visual_mask(&self) -> &[bool] {
        &self.visual_mask
    }

    pub fn vector_map(&self) -> &VectorMap {
        &self.map
    }

    pub fn obstacle_count(&self) -> usize {
        self.occupancy.iter().filter(|&&m| m == 1.0).count()
    }

    pub fn cell_value(&self, i: usize, j: usize) -> f64 {
        self.occupancy[self.grid.index(i, j)]
    }

    /// Frees visible non-obstacle cells under the footprint; returns how many changed to 0.
    pub fn apply_footprint(&mut self, pose: &Pose2, fp: &SensorFootprint) -> usize {
        self.apply_footprint_inner(pose, fp, None)
    }

    /// Like `apply_footprint`, also appending cells that became visually observed.
    pub fn apply_footprint_tracked(
        &mut self,
        pose: &Pose2,
        fp: &SensorFootprint,
        newly_observed: &mut Vec<u32>,
    ) -> usize {
        self.apply_footprint_inner(pose, fp, Some(newly_observed))
    }

    fn apply_footprint_inner(
        &mut self,
        pose: &Pose2,
        fp: &SensorFootprint,
        mut newly_observed: Option<&mut Vec<u32>>,
    ) -> usize {
        let placed = PlacedFootprint::new(fp, pose, &self.map);
        let visual = fp.is_visual();
        let Some(((i0, j0), (i1, j1))) = self.grid.cell_range(placed.lo, placed.hi) else {
            return 0;
        };
        let mut freed = 0;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let idx = self.grid.index(i, j);
                let m = self.occupancy[idx];
                if m == 1.0 {
                    continue;
                }
                let needs_free = m != 0.0;
                let needs_mask = visual && !self.visual_mask[idx];
                if !needs_free && !needs_mask {
                    continue;
                }
                let c = self.grid.center(i, j);
                if !placed.contains(c) || !placed.visible(c) {
                    continue;
                }
                if needs_free {
                    self.occupancy[idx] = 0.0;
                    freed += 1;
                }
                if needs_mask {
                    self.visual_mask[idx] = true;
                    if let Some(out) = newly_observed.as_deref_mut() {
                        out.push(idx as u32);
                    }
                }
            }
        }
        freed
    }

    /// Marks cells as visually observed (used to mirror a remote search map).
    pub fn mark_observed(&mut self, cells: &[u32]) {
        for &c in cells {
            if let Some(slot) = self.visual_mask.get_mut(c as usize) {
                *slot = true;
                if self.occupancy[c as usize] != 1.0 {
                    self.occupancy[c as usize] = 0.0;
                }
            }
        }
    }

    pub fn entropy(&self) -> f64 {
        self.occupancy.iter().map(|&m| cell_entropy(m)).sum()
    }

    pub fn is_visually_observed(&self, p: Point2) -> bool {
        self.grid
            .cell_of(p)
            .is_some_and(|(i, j)| self.visual_mask[self.grid.index(i, j)])
    }

    /// Portable greymap (P2) with 0 → 0, 0.5 → 128, 1 → 255; the top row is the largest y.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n255\n", self.grid.width, self.grid.height);
        for j in (0..self.grid.height).rev() {
            let row: Vec<String> = (0..self.grid.width)
                .map(|i| ((self.cell_value(i, j) * 255.0).round() as u8).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn sidecar(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "origin {} {}", self.grid.origin.x, self.grid.origin.y);
        let _ = writeln!(s, "resolution {}", self.grid.resolution);
        let _ = writeln!(s, "width {}", self.grid.width);
        let _ = writeln!(s, "height {}", self.grid.height);
        s
    }

    /// Writes `<stem>.pgm` and `<stem>.txt`.
    pub fn export(&self, stem: impl AsRef<Path>) -> std::io::Result<()> {
        let stem = stem.as_ref();
        std::fs::write(stem.with_extension("pgm"), self.to_pgm())?;
        std::fs::write(stem.with_extension("txt"), self.sidecar())
    }
}

/// Binary entropy of one cell in bits, with 0·log 0 = 0.
pub fn cell_entropy(m: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { p * p.log2() };
    -(term(m) + term(1.0 - m))
}

pub fn init_search_map(map: &VectorMap, resolution: f64) -> Result<SearchMap, SearchMapError> {
    SearchMap::new(Arc::new(map.clone()), resolution)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchMapError {
    #[error("resolution must be positive and finite, got {0}")]
    InvalidResolution(f64),
    #[error("grid would have {cells} cells (limit {MAX_CELLS})")]
    TooManyCells { cells: u64 },
    #[error("invalid footprint {0:?}")]
    InvalidFootprint(SensorFootprint),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bounds;
    use approx::assert_abs_diff_eq;

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> LineSegment {
        LineSegment::new(Point2::new(x0, y0), Point2::new(x1, y1)).unwrap()
    }

    fn open_10x10() -> VectorMap {
        VectorMap::empty(Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap())
    }

    #[test]
    fn empty_map_is_uniform() {
        let sm = init_search_map(&open_10x10(), 1.0).unwrap();
        assert_eq!((sm.width(), sm.height()), (10, 10));
        assert!(sm.occupancy().iter().all(|&m| m == 0.5));
        assert_eq!(sm.entropy(), 100.0);
        assert!(sm.visual_mask().iter().all(|&v| !v));
    }

    #[test]
    fn horizontal_wall_marks_one_row() {
        let map = VectorMap::new(
            Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![seg(0.0, 5.5, 10.0, 5.5)],
        )
        .unwrap();
        let sm = init_search_map(&map, 1.0).unwrap();
        assert_eq!(sm.obstacle_count(), 10);
        for i in 0..10 {
            assert_eq!(sm.cell_value(i, 5), 1.0);
        }
        assert_eq!(sm.entropy(), 90.0);
    }

    #[test]
    fn fully_tiled_map_has_zero_entropy() {
        let b = Bounds::new(0.0, 0.0, 3.0, 3.0).unwrap();
        let segs = (0..3)
            .map(|j| seg(0.0, j as f64 + 0.5, 3.0, j as f64 + 0.5))
            .collect();
        let sm = init_search_map(&VectorMap::new(b, segs).unwrap(), 1.0).unwrap();
        assert!(sm.occupancy().iter().all(|&m| m == 1.0));
        assert_eq!(sm.entropy(), 0.0);
    }

    #[test]
    fn rejects_absurd_resolution() {
        assert!(matches!(
            init_search_map(&open_10x10(), 0.001),
            Err(SearchMapError::TooManyCells { .. })
        ));
        assert!(init_search_map(&open_10x10(), 0.0).is_err());
    }

    #[test]
    fn rectangular_footprint_frees_sixteen_cells() {
        let mut sm = init_search_map(&open_10x10(), 1.0).unwrap();
        let fp = SensorFootprint::Rectangular {
            length: 4.0,
            width: 4.0,
        };
        let pose = Pose2::new(5.0, 5.0, 0.0);
        assert_eq!(sm.apply_footprint(&pose, &fp), 16);
        assert_eq!(sm.apply_footprint(&pose, &fp), 0);
        assert_eq!(sm.entropy(), 84.0);
        assert!(!sm.is_visually_observed(Point2::new(5.2, 5.2)));
    }

    #[test]
    fn tracked_deltas_rebuild_the_mask() {
        let mut sm = init_search_map(&open_10x10(), 0.5).unwrap();
        let mut mirror = sm.clone();
        let cam = SensorFootprint::Triangular {
            range: 3.0,
            half_angle: 0.5,
        };
        let mut delta = Vec::new();
        sm.apply_footprint_tracked(&Pose2::new(2.0, 5.0, 0.0), &cam, &mut delta);
        sm.apply_footprint_tracked(&Pose2::new(3.0, 5.0, 0.3), &cam, &mut delta);
        let unique: std::collections::BTreeSet<u32> = delta.iter().copied().collect();
        assert_eq!(unique.len(), delta.len());
        mirror.mark_observed(&delta);
        assert_eq!(mirror.visual_mask(), sm.visual_mask());
    }

    #[test]
    fn tiny_footprint_frees_nothing() {
        let mut sm = init_search_map(&open_10x10(), 1.0).unwrap();
        let fp = SensorFootprint::Rectangular {
            length: 0.1,
            width: 0.1,
        };
        assert_eq!(sm.apply_footprint(&Pose2::new(5.0, 5.0, 0.0), &fp), 0);
    }

    #[test]
    fn triangular_footprint_sets_visual_mask() {
        let mut sm = init_search_map(&open_10x10(), 1.0).unwrap();
        assert!(!sm.is_visually_observed(Point2::new(3.5, 5.5)));
        let fp = SensorFootprint::Triangular {
            range: 4.0,
            half_angle: 0.5,
        };
        let freed = sm.apply_footprint(&Pose2::new(1.0, 5.0, 0.0), &fp);
        assert!(freed > 0);
        assert!(sm.is_visually_observed(Point2::new(3.5, 5.5)));
        assert!(!sm.is_visually_observed(Point2::new(3.5, 9.5)));
        assert!(!sm.is_visually_observed(Point2::new(-3.0, 0.0)));
    }

    #[test]
    fn occlusion_blocks_freeing() {
        let map = VectorMap::new(
            Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            vec![seg(6.5, 0.0, 6.5, 10.0)],
        )
        .unwrap();
        let mut sm = init_search_map(&map, 1.0).unwrap();
        let fp = SensorFootprint::Rectangular {
            length: 8.0,
            width: 2.0,
        };
        sm.apply_footprint(&Pose2::new(5.0, 5.0, 0.0), &fp);
        assert_eq!(sm.cell_value(5, 5), 0.0);
        assert_eq!(sm.cell_value(6, 5), 1.0);
        assert_eq!(sm.cell_value(7, 5), 0.5);
        assert_eq!(sm.cell_value(8, 5), 0.5);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(cell_entropy(0.5), 1.0);
        assert_eq!(cell_entropy(0.0), 0.0);
        assert_eq!(cell_entropy(1.0), 0.0);
        // −(0.9·log2 0.9 + 0.1·log2 0.1) = 0.136803 + 0.332193
        assert_abs_diff_eq!(cell_entropy(0.9), 0.46900, epsilon = 1e-5);
    }

    #[test]
    fn pgm_export_levels() {
        let map = VectorMap::new(
            Bounds::new(0.0, 0.0, 3.0, 2.0).unwrap(),
            vec![seg(0.0, 1.5, 3.0, 1.5)],
        )
        .unwrap();
        let mut sm = init_search_map(&map, 1.0).unwrap();
        sm.apply_footprint(
            &Pose2::new(0.5, 0.5, 0.0),
            &SensorFootprint::Rectangular {
                length: 0.5,
                width: 0.5,
            },
        );
        assert_eq!(sm.to_pgm(), "P2\n3 2\n255\n255 255 255\n0 128 128\n");
        assert_eq!(sm.sidecar(), "origin 0 0\nresolution 1\nwidth 3\nheight 2\n");
    }

    #[test]
    fn footprint_validation() {
        assert!(SensorFootprint::Triangular {
            range: 1.0,
            half_angle: 1.6
        }
        .validate()
        .is_err());
        assert!(SensorFootprint::Rectangular {
            length: 0.0,
            width: 1.0
        }
        .validate()
        .is_err());
    }
}
