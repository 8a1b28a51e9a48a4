//! Coordinates, location discretization, trajectories, segments and distance
//! primitives.
//!
//! Everything downstream works in a normalized planar frame: raw `(lon, lat)`
//! samples are mapped affinely into `[0, 1]²` through a [`BBox`] and then
//! snapped to the finest grid, which gives each sample a discrete
//! [`Location`] identity for frequency counting.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in the normalized planar frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

/// One raw GPS fix as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub object_id: String,
    pub timestamp: f64,
    pub lon: f64,
    pub lat: f64,
}

/// Geographic frame used to normalize raw coordinates into `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        let ok = [min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite()) && min_x < max_x && min_y < max_y;
        if !ok {
            return Err(Error::Config(format!(
                "invalid bounding box [{min_x}, {min_y}] x [{max_x}, {max_y}]"
            )));
        }
        Ok(Self {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    /// Tight box around the samples. Degenerate extents are widened by a
    /// small margin so the box always has positive area.
    pub fn enclosing(samples: &[RawSample]) -> Option<Self> {
        let first = samples.first()?;
        let mut b = BBox {
            min_x: first.lon,
            min_y: first.lat,
            max_x: first.lon,
            max_y: first.lat,
        };
        for s in samples {
            b.min_x = b.min_x.min(s.lon);
            b.min_y = b.min_y.min(s.lat);
            b.max_x = b.max_x.max(s.lon);
            b.max_y = b.max_y.max(s.lat);
        }
        const PAD: f64 = 1e-6;
        if b.max_x <= b.min_x {
            b.min_x -= PAD;
            b.max_x += PAD;
        }
        if b.max_y <= b.min_y {
            b.min_y -= PAD;
            b.max_y += PAD;
        }
        Some(b)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_x && lon <= self.max_x && lat >= self.min_y && lat <= self.max_y
    }

    /// Affine map into the unit square; `None` outside the box.
    pub fn normalize(&self, lon: f64, lat: f64) -> Option<Point> {
        if !self.contains(lon, lat) {
            return None;
        }
        Some(Point::new(
            (lon - self.min_x) / (self.max_x - self.min_x),
            (lat - self.min_y) / (self.max_y - self.min_y),
        ))
    }

    pub fn denormalize(&self, p: Point) -> (f64, f64) {
        (
            self.min_x + p.x * (self.max_x - self.min_x),
            self.min_y + p.y * (self.max_y - self.min_y),
        )
    }
}

/// Maps samples into the unit square, preserving order. Samples outside
/// `bbox` are dropped; the second element counts them.
pub fn normalize(samples: &[RawSample], bbox: &BBox) -> (Vec<Point>, usize) {
    let mut out = Vec::with_capacity(samples.len());
    let mut rejected = 0;
    for s in samples {
        match bbox.normalize(s.lon, s.lat) {
            Some(p) => out.push(p),
            None => rejected += 1,
        }
    }
    (out, rejected)
}

/// A discrete location: one cell of the finest grid.
///
/// Equality, hashing and ordering only look at the cell indices; `center`
/// is derived data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Location {
    pub cell_x: u32,
    pub cell_y: u32,
    pub center: Point,
}

impl Location {
    pub fn from_cell(cell_x: u32, cell_y: u32, granularity: u32) -> Self {
        let g = granularity as f64;
        Self {
            cell_x,
            cell_y,
            center: Point::new((cell_x as f64 + 0.5) / g, (cell_y as f64 + 0.5) / g),
        }
    }

    #[inline]
    pub fn key(&self) -> (u32, u32) {
        (self.cell_x, self.cell_y)
    }
}

impl PartialEq for Location {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Location {}

impl Hash for Location {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Location {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Location {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.cell_x, self.cell_y)
    }
}

/// Index of the grid cell containing coordinate `v` at `granularity` cells
/// per side. Lower edges are closed, upper edges open, except the domain
/// boundary 1.0 which falls into the last cell.
#[inline]
pub fn cell_index(v: f64, granularity: u32) -> u32 {
    let c = (v * granularity as f64).floor();
    if c <= 0.0 {
        0
    } else {
        (c as u32).min(granularity - 1)
    }
}

pub fn snap_to_location(p: Point, granularity: u32) -> Location {
    debug_assert!(granularity >= 1);
    Location::from_cell(cell_index(p.x, granularity), cell_index(p.y, granularity), granularity)
}

/// An element of a trajectory. `uid` is unique within its trajectory and
/// never reused, so segments keep a stable identity while points are
/// inserted and deleted around them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint {
    pub location: Location,
    pub timestamp: f64,
    pub uid: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Position of the trajectory in its dataset.
    pub id: u32,
    pub object_id: String,
    pub points: Vec<TrajPoint>,
    next_uid: u32,
}

impl Trajectory {
    /// Builds a trajectory from `(location, timestamp)` pairs already in
    /// chronological order. Point uids are their initial positions.
    pub fn new(id: u32, object_id: impl Into<String>, pts: Vec<(Location, f64)>) -> Self {
        let points: Vec<TrajPoint> = pts
            .into_iter()
            .enumerate()
            .map(|(i, (location, timestamp))| TrajPoint {
                location,
                timestamp,
                uid: i as u32,
            })
            .collect();
        let next_uid = points.len() as u32;
        Self {
            id,
            object_id: object_id.into(),
            points,
            next_uid,
        }
    }

    /// Convenience constructor with timestamps `0, 1, 2, …`.
    pub fn from_locations(id: u32, object_id: impl Into<String>, locs: &[Location]) -> Self {
        Self::new(
            id,
            object_id,
            locs.iter().enumerate().map(|(i, l)| (*l, i as f64)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = Location> + '_ {
        self.points.iter().map(|p| p.location)
    }

    pub fn count(&self, loc: &Location) -> usize {
        self.points.iter().filter(|p| p.location == *loc).count()
    }

    pub fn contains(&self, loc: &Location) -> bool {
        self.points.iter().any(|p| p.location == *loc)
    }

    pub fn position_of_uid(&self, uid: u32) -> Option<usize> {
        self.points.iter().position(|p| p.uid == uid)
    }

    pub(crate) fn fresh_uid(&mut self) -> u32 {
        let uid = self.next_uid;
        self.next_uid += 1;
        uid
    }
}

/// Stable identity of a segment: its trajectory and the uids of its two
/// endpoints. A degenerate segment (single-point trajectory) has
/// `start == end`.
///
/// The derived ordering is the deterministic tie-break used by every
/// nearest-segment search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId {
    pub trajectory: u32,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub id: SegmentId,
}

impl Segment {
    pub fn new(a: Point, b: Point, id: SegmentId) -> Self {
        Self { a, b, id }
    }

    pub fn is_degenerate(&self) -> bool {
        self.id.start == self.id.end
    }

    #[inline]
    pub fn distance_to(&self, q: Point) -> f64 {
        point_segment_distance(q, self.a, self.b)
    }
}

/// Euclidean distance from `q` to the closed segment `[a, b]`.
#[inline]
pub fn point_segment_distance(q: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return q.dist(&a);
    }
    let t = (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    let foot = Point::new(a.x + t * dx, a.y + t * dy);
    // The projection can land a hair off the true foot; the endpoints bound
    // the answer from above.
    q.dist2(&foot).min(q.dist2(&a)).min(q.dist2(&b)).sqrt()
}

fn segment_between(traj: u32, p: &TrajPoint, r: &TrajPoint) -> Segment {
    Segment::new(
        p.location.center,
        r.location.center,
        SegmentId {
            trajectory: traj,
            start: p.uid,
            end: r.uid,
        },
    )
}

/// The `|τ| − 1` segments between consecutive points, in trajectory order.
pub fn segments_of(traj: &Trajectory) -> Vec<Segment> {
    traj.points
        .windows(2)
        .map(|w| segment_between(traj.id, &w[0], &w[1]))
        .collect()
}

/// Segments as stored in a search index: [`segments_of`], except that a
/// single-point trajectory contributes one degenerate segment so it can
/// still be found (and extended) by nearest-segment searches.
pub fn index_segments(traj: &Trajectory) -> Vec<Segment> {
    match traj.points.as_slice() {
        [] => Vec::new(),
        [only] => vec![segment_between(traj.id, only, only)],
        _ => segments_of(traj),
    }
}

/// The indexable segment starting at position `pos` (degenerate when the
/// trajectory has a single point).
pub(crate) fn index_segment_at(traj: &Trajectory, pos: usize) -> Segment {
    if traj.points.len() == 1 {
        segment_between(traj.id, &traj.points[0], &traj.points[0])
    } else {
        segment_between(traj.id, &traj.points[pos], &traj.points[pos + 1])
    }
}

/// A collection of trajectories sharing one discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    /// Finest grid granularity used to snap locations (cells per side).
    pub granularity: u32,
}

impl Dataset {
    /// Wraps trajectories, renumbering their ids to dataset positions.
    pub fn new(mut trajectories: Vec<Trajectory>, granularity: u32) -> Self {
        for (i, t) in trajectories.iter_mut().enumerate() {
            t.id = i as u32;
        }
        Self {
            trajectories,
            granularity,
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn location(&self, cell_x: u32, cell_y: u32) -> Location {
        Location::from_cell(cell_x, cell_y, self.granularity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(a: (f64, f64), b: (f64, f64)) -> Segment {
        Segment::new(
            Point::new(a.0, a.1),
            Point::new(b.0, b.1),
            SegmentId {
                trajectory: 0,
                start: 0,
                end: 1,
            },
        )
    }

    #[test]
    fn normalize_maps_corners_and_midpoint() {
        let bbox = BBox::new(116.0, 39.0, 117.0, 40.0).unwrap();
        let samples = vec![
            RawSample {
                object_id: "a".into(),
                timestamp: 0.0,
                lon: 116.0,
                lat: 39.0,
            },
            RawSample {
                object_id: "a".into(),
                timestamp: 1.0,
                lon: 117.0,
                lat: 40.0,
            },
            RawSample {
                object_id: "a".into(),
                timestamp: 2.0,
                lon: 116.5,
                lat: 39.5,
            },
            RawSample {
                object_id: "a".into(),
                timestamp: 3.0,
                lon: 118.0,
                lat: 39.5,
            },
        ];
        let (pts, rejected) = normalize(&samples, &bbox);
        assert_eq!(
            pts,
            vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(0.5, 0.5)]
        );
        assert_eq!(rejected, 1);
    }

    #[test]
    fn degenerate_bbox_is_widened() {
        let s = vec![RawSample {
            object_id: "a".into(),
            timestamp: 0.0,
            lon: 1.0,
            lat: 2.0,
        }];
        let b = BBox::enclosing(&s).unwrap();
        assert!(b.min_x < b.max_x && b.min_y < b.max_y);
        assert!(BBox::new(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn snap_examples() {
        let l = snap_to_location(Point::new(0.5, 0.5), 4);
        assert_eq!(l.key(), (2, 2));
        assert_eq!(l.center, Point::new(0.625, 0.625));
        assert_eq!(snap_to_location(Point::new(1.0, 1.0), 4).key(), (3, 3));
        assert_eq!(snap_to_location(Point::new(0.0, 0.0), 512).key(), (0, 0));
    }

    #[test]
    fn location_identity_ignores_center() {
        let a = Location::from_cell(3, 4, 8);
        let mut b = a;
        b.center = Point::new(9.0, 9.0);
        assert_eq!(a, b);
    }

    #[test]
    fn point_segment_distance_examples() {
        let s = seg((-1.0, 0.0), (1.0, 0.0));
        assert!((s.distance_to(Point::new(0.0, 1.0)) - 1.0).abs() < 1e-15);
        assert!((s.distance_to(Point::new(2.0, 1.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert!(s.distance_to(Point::new(0.3, 0.0)) < 1e-15);
        assert_eq!(s.distance_to(Point::new(1.0, 0.0)), 0.0);
        let d = seg((0.2, 0.2), (0.2, 0.2));
        assert!((d.distance_to(Point::new(0.5, 0.6)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn segments_of_counts() {
        let locs: Vec<Location> = (0..4).map(|i| Location::from_cell(i, 0, 8)).collect();
        let t4 = Trajectory::from_locations(0, "o", &locs);
        let s = segments_of(&t4);
        assert_eq!(s.len(), 3);
        for w in s.windows(2) {
            assert_eq!(w[0].b, w[1].a);
            assert_eq!(w[0].id.end, w[1].id.start);
        }
        let t1 = Trajectory::from_locations(0, "o", &locs[..1]);
        assert!(segments_of(&t1).is_empty());
        assert_eq!(index_segments(&t1).len(), 1);
        assert!(index_segments(&t1)[0].is_degenerate());
        let t2 = Trajectory::from_locations(0, "o", &locs[..2]);
        let s2 = segments_of(&t2);
        assert_eq!(s2.len(), 1);
        assert_eq!((s2[0].id.start, s2[0].id.end), (0, 1));
    }

    fn pt() -> impl Strategy<Value = Point> {
        (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_bounded_by_endpoints(q in pt(), a in pt(), b in pt()) {
            let d = point_segment_distance(q, a, b);
            prop_assert!(d <= q.dist(&a).min(q.dist(&b)));
            prop_assert!(d >= 0.0);
        }

        #[test]
        fn points_on_segment_have_zero_distance(a in pt(), b in pt(), t in 0.0f64..=1.0) {
            let q = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            prop_assert!(point_segment_distance(q, a, b) <= 1e-12);
        }

        #[test]
        fn off_segment_points_are_positive(a in pt(), b in pt(), t in 0.0f64..=1.0, off in 1e-3f64..1.0) {
            let len = a.dist(&b);
            prop_assume!(len > 1e-6);
            // Offset perpendicular to the segment.
            let nx = -(b.y - a.y) / len;
            let ny = (b.x - a.x) / len;
            let q = Point::new(a.x + t * (b.x - a.x) + off * nx, a.y + t * (b.y - a.y) + off * ny);
            prop_assert!(point_segment_distance(q, a, b) > 1e-12);
        }

        #[test]
        fn snapping_is_idempotent_on_centers(x in 0.0f64..=1.0, y in 0.0f64..=1.0, pow in 0u32..10) {
            let g = 1u32 << pow;
            let l = snap_to_location(Point::new(x, y), g);
            prop_assert!(l.cell_x < g && l.cell_y < g);
            let again = snap_to_location(l.center, g);
            prop_assert_eq!(again.key(), l.key());
            prop_assert_eq!(again.center, l.center);
        }
    }
}
