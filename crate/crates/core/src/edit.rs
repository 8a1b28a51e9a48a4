//! Point insertion and deletion, their utility losses, and in-place
//! application with the segment diff a search index needs.

use serde::Serialize;

use crate::geo::{index_segment_at, Location, Point, Segment, SegmentId, TrajPoint, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EditKind {
    /// Splice the target between the endpoints of `host`. A degenerate host
    /// (single-point trajectory) means append after that point.
    Insert { host: SegmentId },
    /// Remove the point with this uid and reconnect its neighbours.
    Delete { uid: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditOp {
    pub kind: EditKind,
    pub target: Location,
    pub trajectory_id: u32,
    pub loss: f64,
}

impl EditOp {
    pub fn is_insert(&self) -> bool {
        matches!(self.kind, EditKind::Insert { .. })
    }
}

/// Cost of inserting `q` into segment `s`: its distance to the segment.
pub fn insertion_loss(q: &Location, s: &Segment) -> f64 {
    s.distance_to(q.center)
}

/// Cost of deleting the point at `pos`: its distance to the segment that
/// reconnects its neighbours. At either end of the trajectory the loss is
/// the distance to the single surviving neighbour; a lone point costs 0.
pub fn deletion_loss(traj: &Trajectory, pos: usize) -> f64 {
    let pts = &traj.points;
    let q = pts[pos].location.center;
    let prev = pos.checked_sub(1).map(|i| pts[i].location.center);
    let next = pts.get(pos + 1).map(|p| p.location.center);
    reconnect_loss(q, prev, next)
}

fn reconnect_loss(q: Point, prev: Option<Point>, next: Option<Point>) -> f64 {
    match (prev, next) {
        (Some(a), Some(b)) => crate::geo::point_segment_distance(q, a, b),
        (Some(n), None) | (None, Some(n)) => q.dist(&n),
        (None, None) => 0.0,
    }
}

/// Loss of removing every occurrence of `q`, evaluated front to back on the
/// progressively shortened trajectory.
pub fn complete_deletion_loss(q: &Location, traj: &Trajectory) -> Result<f64> {
    let mut remaining: Vec<Point> = Vec::with_capacity(traj.len());
    let mut total = 0.0;
    let mut found = false;
    // Surviving points so far are exactly `remaining`; the right neighbour
    // of an occurrence is the next point that is not itself being deleted
    // yet, i.e. simply the next original point.
    let pts = &traj.points;
    for (i, p) in pts.iter().enumerate() {
        if p.location == *q {
            found = true;
            let prev = remaining.last().copied();
            let next = pts.get(i + 1).map(|n| n.location.center);
            total += reconnect_loss(p.location.center, prev, next);
        } else {
            remaining.push(p.location.center);
        }
    }
    if !found {
        return Err(Error::NothingToDelete(q.to_string(), traj.id));
    }
    Ok(total)
}

pub fn plan_insert(traj: &Trajectory, host: &Segment, q: Location) -> EditOp {
    debug_assert_eq!(host.id.trajectory, traj.id);
    EditOp {
        kind: EditKind::Insert { host: host.id },
        target: q,
        trajectory_id: traj.id,
        loss: insertion_loss(&q, host),
    }
}

pub fn plan_delete(traj: &Trajectory, pos: usize) -> EditOp {
    let p = &traj.points[pos];
    EditOp {
        kind: EditKind::Delete { uid: p.uid },
        target: p.location,
        trajectory_id: traj.id,
        loss: deletion_loss(traj, pos),
    }
}

/// Index segments that disappeared and appeared because of one edit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentDiff {
    pub removed: Vec<Segment>,
    pub added: Vec<Segment>,
}

fn stale(traj: &Trajectory, reason: impl Into<String>) -> Error {
    Error::InvalidEdit {
        trajectory: traj.id,
        reason: reason.into(),
    }
}

/// Applies `op` to `traj` in place.
///
/// Fails without touching the trajectory if the op no longer matches its
/// current state (host segment split, point already gone, wrong target).
pub fn apply(op: &EditOp, traj: &mut Trajectory) -> Result<SegmentDiff> {
    if op.trajectory_id != traj.id {
        return Err(stale(traj, "op planned for another trajectory"));
    }
    match op.kind {
        EditKind::Insert { host } => apply_insert(traj, host, op.target),
        EditKind::Delete { uid } => apply_delete(traj, uid, op.target),
    }
}

fn apply_insert(traj: &mut Trajectory, host: SegmentId, q: Location) -> Result<SegmentDiff> {
    let pos = traj
        .position_of_uid(host.start)
        .ok_or_else(|| stale(traj, format!("host start {} not found", host.start)))?;
    if host.start == host.end {
        if traj.len() != 1 {
            return Err(stale(traj, "degenerate host on a multi-point trajectory"));
        }
        let removed = vec![index_segment_at(traj, 0)];
        let ts = traj.points[0].timestamp;
        let uid = traj.fresh_uid();
        traj.points.push(TrajPoint {
            location: q,
            timestamp: ts,
            uid,
        });
        return Ok(SegmentDiff {
            removed,
            added: vec![index_segment_at(traj, 0)],
        });
    }
    if traj.points.get(pos + 1).map(|p| p.uid) != Some(host.end) {
        return Err(stale(
            traj,
            format!("segment {}->{} no longer exists", host.start, host.end),
        ));
    }
    let removed = vec![index_segment_at(traj, pos)];
    let ts = 0.5 * (traj.points[pos].timestamp + traj.points[pos + 1].timestamp);
    let uid = traj.fresh_uid();
    traj.points.insert(
        pos + 1,
        TrajPoint {
            location: q,
            timestamp: ts,
            uid,
        },
    );
    Ok(SegmentDiff {
        removed,
        added: vec![index_segment_at(traj, pos), index_segment_at(traj, pos + 1)],
    })
}

fn apply_delete(traj: &mut Trajectory, uid: u32, q: Location) -> Result<SegmentDiff> {
    let pos = traj
        .position_of_uid(uid)
        .ok_or_else(|| stale(traj, format!("point {uid} not found")))?;
    if traj.points[pos].location != q {
        return Err(stale(traj, format!("point {uid} is not at {q}")));
    }
    let n = traj.len();
    if n == 1 {
        return Err(stale(traj, "cannot delete the only point of a trajectory"));
    }
    let mut removed = Vec::with_capacity(2);
    if pos > 0 {
        removed.push(index_segment_at(traj, pos - 1));
    }
    if pos + 1 < n {
        removed.push(index_segment_at(traj, pos));
    }
    traj.points.remove(pos);
    let added = if traj.len() == 1 {
        vec![index_segment_at(traj, 0)]
    } else if pos > 0 && pos < traj.len() {
        vec![index_segment_at(traj, pos - 1)]
    } else {
        Vec::new()
    };
    Ok(SegmentDiff { removed, added })
}

/// Accumulated utility loss of applied edits.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UtilityLoss {
    pub per_trajectory: Vec<f64>,
    pub total: f64,
    pub insertions: usize,
    pub deletions: usize,
}

impl UtilityLoss {
    pub fn new(trajectories: usize) -> Self {
        Self {
            per_trajectory: vec![0.0; trajectories],
            ..Self::default()
        }
    }

    pub fn record(&mut self, op: &EditOp) {
        let i = op.trajectory_id as usize;
        if i >= self.per_trajectory.len() {
            self.per_trajectory.resize(i + 1, 0.0);
        }
        self.per_trajectory[i] += op.loss;
        self.total += op.loss;
        if op.is_insert() {
            self.insertions += 1;
        } else {
            self.deletions += 1;
        }
    }

    pub fn merge(&mut self, other: &UtilityLoss) {
        if other.per_trajectory.len() > self.per_trajectory.len() {
            self.per_trajectory.resize(other.per_trajectory.len(), 0.0);
        }
        for (a, b) in self.per_trajectory.iter_mut().zip(&other.per_trajectory) {
            *a += b;
        }
        self.total += other.total;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
    }

    pub fn edits(&self) -> usize {
        self.insertions + self.deletions
    }
}
