//! Planar geometry: points, poses, line-segment maps and analytic ray casting.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for parametric bounds in intersection tests.
const PARAM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn distance_squared(self, other: Point2) -> f64 {
        (self - other).norm_squared()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-π, π]`.
/// Angles already in range come back bit-for-bit unchanged.
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Robot pose in the plane. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    theta: f64,
}

impl From<RawPose> for Pose2 {
    fn from(raw: RawPose) -> Self {
        Pose2::new(raw.x, raw.y, raw.theta)
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn with_position(&self, p: Point2) -> Pose2 {
        Pose2 {
            x: p.x,
            y: p.y,
            theta: self.theta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Maps a point expressed in the robot frame into the global frame.
pub fn transform_to_global(pose: &Pose2, p: Point2) -> Point2 {
    p.rotate(pose.theta) + pose.position()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub a: Point2,
    pub b: Point2,
}

impl LineSegment {
    pub fn new(a: Point2, b: Point2) -> Result<Self, GeometryError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if a.distance(b) <= 0.0 {
            return Err(GeometryError::DegenerateSegment { x: a.x, y: a.y });
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn direction(&self) -> Point2 {
        self.b - self.a
    }

    pub fn min_corner(&self) -> Point2 {
        Point2::new(self.a.x.min(self.b.x), self.a.y.min(self.b.y))
    }

    pub fn max_corner(&self) -> Point2 {
        Point2::new(self.a.x.max(self.b.x), self.a.y.max(self.b.y))
    }
}

/// Euclidean distance from `p` to the closed segment `s`.
pub fn dist_point_segment(p: Point2, s: &LineSegment) -> f64 {
    let e = s.direction();
    let len2 = e.norm_squared();
    let t = ((p - s.a).dot(e) / len2).clamp(0.0, 1.0);
    p.distance(s.a + e * t)
}

fn orientation(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_span(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) - PARAM_EPS
        && p.x <= a.x.max(b.x) + PARAM_EPS
        && p.y >= a.y.min(b.y) - PARAM_EPS
        && p.y <= a.y.max(b.y) + PARAM_EPS
}

/// Closed segment–segment intersection test (touching counts).
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_span(q1, q2, p1))
        || (d2 == 0.0 && on_span(q1, q2, p2))
        || (d3 == 0.0 && on_span(p1, p2, q1))
        || (d4 == 0.0 && on_span(p1, p2, q2))
}

/// Minimum distance between two closed segments.
pub fn dist_segment_segment(p1: Point2, p2: Point2, s: &LineSegment) -> f64 {
    if segments_intersect(p1, p2, s.a, s.b) {
        return 0.0;
    }
    let mut d = dist_point_segment(p1, s).min(dist_point_segment(p2, s));
    if p1 != p2 {
        let q = LineSegment { a: p1, b: p2 };
        d = d
            .min(dist_point_segment(s.a, &q))
            .min(dist_point_segment(s.b, &q));
    }
    d
}

/// Distance along the ray `origin + t·dir` (`dir` unit length, `t ≥ 0`) to the segment.
pub fn ray_segment_intersection(origin: Point2, dir: Point2, s: &LineSegment) -> Option<f64> {
    let e = s.direction();
    let ao = s.a - origin;
    let denom = dir.cross(e);
    let scale = e.norm();
    if denom.abs() > PARAM_EPS * scale {
        let t = ao.cross(e) / denom;
        let u = ao.cross(dir) / denom;
        if t >= 0.0 && (-PARAM_EPS..=1.0 + PARAM_EPS).contains(&u) {
            return Some(t);
        }
        return None;
    }
    // Parallel: only a collinear segment can be hit.
    if ao.cross(dir).abs() > PARAM_EPS * scale.max(1.0) {
        return None;
    }
    let ta = ao.dot(dir);
    let tb = (s.b - origin).dot(dir);
    let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
    if hi < 0.0 {
        None
    } else {
        Some(lo.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        let b = Self {
            min: Point2::new(xmin, ymin),
            max: Point2::new(xmax, ymax),
        };
        if !b.min.is_finite() || !b.max.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if xmax <= xmin || ymax <= ymin {
            return Err(GeometryError::EmptyBounds);
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    pub fn contains_with_margin(&self, p: Point2, margin: f64) -> bool {
        p.x >= self.min.x - margin
            && p.x <= self.max.x + margin
            && p.y >= self.min.y - margin
            && p.y <= self.max.y + margin
    }
}

/// Static world described as a list of wall segments inside a bounding rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorMap {
    segments: Vec<LineSegment>,
    bounds: Bounds,
}

impl VectorMap {
    pub fn new(bounds: Bounds, segments: Vec<LineSegment>) -> Result<Self, GeometryError> {
        for (index, s) in segments.iter().enumerate() {
            if !bounds.contains_with_margin(s.a, 1e-9) || !bounds.contains_with_margin(s.b, 1e-9) {
                return Err(GeometryError::SegmentOutOfBounds { index });
            }
        }
        Ok(Self { segments, bounds })
    }

    pub fn empty(bounds: Bounds) -> Self {
        Self {
            segments: Vec::new(),
            bounds,
        }
    }

    pub fn segments(&self) -> &[LineSegment] {
        &self.segments
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distance to the nearest segment, or `None` for an empty map.
    pub fn nearest_distance(&self, p: Point2) -> Option<f64> {
        self.segments
            .iter()
            .map(|s| dist_point_segment(p, s))
            .min_by(f64::total_cmp)
    }

    /// True when the closed segment `p`–`q` touches any wall.
    pub fn blocks(&self, p: Point2, q: Point2) -> bool {
        self.segments
            .iter()
            .any(|s| segments_intersect(p, q, s.a, s.b))
    }

    /// Segments whose bounding boxes overlap the given rectangle.
    pub fn segments_in_box(&self, lo: Point2, hi: Point2) -> Vec<LineSegment> {
        self.segments
            .iter()
            .filter(|s| {
                let smin = s.min_corner();
                let smax = s.max_corner();
                smax.x >= lo.x && smin.x <= hi.x && smax.y >= lo.y && smin.y <= hi.y
            })
            .copied()
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MapFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MapFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_string())
    }
}

impl fmt::Display for VectorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.bounds;
        writeln!(f, "bounds {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y)?;
        for s in &self.segments {
            writeln!(f, "{} {} {} {}", s.a.x, s.a.y, s.b.x, s.b.y)?;
        }
        Ok(())
    }
}

fn parse_numbers(line: usize, fields: &[&str]) -> Result<[f64; 4], MapFileError> {
    if fields.len() != 4 {
        return Err(MapFileError::Syntax {
            line,
            message: format!("expected 4 numbers, found {}", fields.len()),
        });
    }
    let mut out = [0.0; 4];
    for (slot, token) in out.iter_mut().zip(fields) {
        let v: f64 = token.parse().map_err(|_| MapFileError::Syntax {
            line,
            message: format!("invalid number {token:?}"),
        })?;
        if !v.is_finite() {
            return Err(MapFileError::Syntax {
                line,
                message: format!("non-finite number {token:?}"),
            });
        }
        *slot = v;
    }
    Ok(out)
}

impl FromStr for VectorMap {
    type Err = MapFileError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut bounds = None;
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim_end();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split(' ').collect();
            if fields[0] == "bounds" {
                if bounds.is_some() {
                    return Err(MapFileError::Syntax {
                        line,
                        message: "duplicate bounds header".into(),
                    });
                }
                if !segments.is_empty() {
                    return Err(MapFileError::Syntax {
                        line,
                        message: "bounds header must precede segments".into(),
                    });
                }
                let [x0, y0, x1, y1] = parse_numbers(line, &fields[1..])?;
                bounds = Some(
                    Bounds::new(x0, y0, x1, y1)
                        .map_err(|source| MapFileError::Geometry { line, source })?,
                );
                continue;
            }
            let b = bounds.ok_or(MapFileError::MissingBounds { line })?;
            let [x0, y0, x1, y1] = parse_numbers(line, &fields)?;
            let seg = LineSegment::new(Point2::new(x0, y0), Point2::new(x1, y1))
                .map_err(|source| MapFileError::Geometry { line, source })?;
            if !b.contains_with_margin(seg.a, 1e-9) || !b.contains_with_margin(seg.b, 1e-9) {
                return Err(MapFileError::Geometry {
                    line,
                    source: GeometryError::SegmentOutOfBounds {
                        index: segments.len(),
                    },
                });
            }
            segments.push(seg);
        }
        let bounds = bounds.ok_or(MapFileError::MissingBounds { line: 0 })?;
        Ok(VectorMap { segments, bounds })
    }
}

/// Casts a single ray against an arbitrary list of segments.
pub fn ray_cast_segments(
    origin: Point2,
    angle: f64,
    max_range: f64,
    segments: &[LineSegment],
) -> Option<f64> {
    let dir = Point2::new(angle.cos(), angle.sin());
    segments
        .iter()
        .filter_map(|s| ray_segment_intersection(origin, dir, s))
        .filter(|&t| t <= max_range)
        .min_by(f64::total_cmp)
}

/// Range to the first wall along `bearing` (relative to the pose heading), if within `max_range`.
pub fn ray_cast(pose: &Pose2, bearing: f64, max_range: f64, map: &VectorMap) -> Option<f64> {
    ray_cast_segments(pose.position(), pose.theta + bearing, max_range, map.segments())
}

pub fn expected_scan(
    pose: &Pose2,
    bearings: &[f64],
    map: &VectorMap,
    max_range: f64,
) -> Vec<Option<f64>> {
    bearings
        .iter()
        .map(|&b| ray_cast(pose, b, max_range, map))
        .collect()
}

/// `n` bearings evenly spaced over a full turn, starting at 0.
pub fn uniform_bearings(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Closed-boundary point-in-convex-polygon test; vertices in either winding.
pub fn point_in_convex_polygon(p: Point2, vertices: &[Point2]) -> bool {
    let n = vertices.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = orientation(vertices[i], vertices[(i + 1) % n], p);
        if c.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    true
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate segment at ({x}, {y})")]
    DegenerateSegment { x: f64, y: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("bounds have no area")]
    EmptyBounds,
    #[error("segment {index} lies outside the map bounds")]
    SegmentOutOfBounds { index: usize },
}

#[derive(Debug, Error)]
pub enum MapFileError {
    #[error("cannot read map {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: segment before `bounds` header")]
    MissingBounds { line: usize },
    #[error("line {line}: {source}")]
    Geometry { line: usize, source: GeometryError },
}
