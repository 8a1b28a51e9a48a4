//! Segment indexes and K-nearest-segment search.
//!
//! [`HierarchicalGrid`] is the main structure: nested grids of doubling
//! granularity where each segment lives in the deepest cell that still
//! contains both endpoints. Three search strategies run over it
//! ([`Strategy::TopDown`], [`Strategy::BottomUp`] and
//! [`Strategy::BottomUpDown`]); [`LinearIndex`] and [`UniformGrid`] are the
//! baselines they are measured against. All of them return exactly the same
//! neighbours in the same order under the [`Neighbor`] ordering.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::geo::{Point, Segment};
use crate::{Error, Result};

mod grid;
mod linear;
mod search;
mod uniform;

pub use grid::{best_fit_cell, min_dist, CellKey, GridCell, HierarchicalGrid};
pub use linear::{knn_linear, LinearIndex};
pub use search::{knn_bottomup, knn_bud, knn_topdown, search_bottomup, search_bud, search_topdown};
pub use uniform::UniformGrid;

/// A candidate segment and its distance to the query.
///
/// Ordered by distance, then by segment id; this is the tie-break every
/// strategy agrees on.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub segment: Segment,
    pub distance: f64,
}

impl PartialEq for Neighbor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.segment.id.cmp(&other.segment.id))
    }
}

/// Work done by one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub cells_visited: usize,
    pub segments_checked: usize,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.cells_visited += rhs.cells_visited;
        self.segments_checked += rhs.segments_checked;
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchResult {
    /// Non-decreasing in distance.
    pub neighbors: Vec<Neighbor>,
    pub stats: SearchStats,
}

impl SearchResult {
    /// Distance of the K-th (last) neighbour.
    pub fn threshold(&self) -> Option<f64> {
        self.neighbors.last().map(|n| n.distance)
    }

    pub fn ids(&self) -> Vec<crate::geo::SegmentId> {
        self.neighbors.iter().map(|n| n.segment.id).collect()
    }
}

/// Receives candidate segments during a search and reports the pruning
/// threshold. Once [`Collector::threshold`] is `Some(θ)`, any segment
/// farther than `θ` can no longer change the outcome.
pub trait Collector {
    fn offer(&mut self, segment: &Segment, distance: f64);
    fn threshold(&self) -> Option<f64>;
}

/// The K nearest segments.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1024) + 1),
        }
    }

    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec()
    }
}

impl Collector for TopK {
    #[inline]
    fn offer(&mut self, segment: &Segment, distance: f64) {
        if self.k == 0 {
            return;
        }
        let n = Neighbor {
            segment: *segment,
            distance,
        };
        if self.heap.len() < self.k {
            self.heap.push(n);
        } else if n < *self.heap.peek().expect("full heap") {
            self.heap.pop();
            self.heap.push(n);
        }
    }

    #[inline]
    fn threshold(&self) -> Option<f64> {
        if self.k > 0 && self.heap.len() >= self.k {
            self.heap.peek().map(|n| n.distance)
        } else {
            None
        }
    }
}

/// The K nearest segments among those accepted by a filter.
pub struct TopKWhere<F> {
    inner: TopK,
    accept: F,
}

impl<F: Fn(&Segment) -> bool> TopKWhere<F> {
    pub fn new(k: usize, accept: F) -> Self {
        Self {
            inner: TopK::new(k),
            accept,
        }
    }

    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.inner.into_sorted()
    }
}

impl<F: Fn(&Segment) -> bool> Collector for TopKWhere<F> {
    #[inline]
    fn offer(&mut self, segment: &Segment, distance: f64) {
        if (self.accept)(segment) {
            self.inner.offer(segment, distance);
        }
    }

    #[inline]
    fn threshold(&self) -> Option<f64> {
        self.inner.threshold()
    }
}

/// The K nearest *trajectories* among those accepted by a filter, each
/// represented by its nearest segment.
pub struct NearestTrajectories<F> {
    k: usize,
    eligible: F,
    best: FxHashMap<u32, Neighbor>,
    order: BTreeSet<Neighbor>,
}

impl<F: Fn(u32) -> bool> NearestTrajectories<F> {
    pub fn new(k: usize, eligible: F) -> Self {
        Self {
            k,
            eligible,
            best: FxHashMap::default(),
            order: BTreeSet::new(),
        }
    }

    /// One neighbour per trajectory, nearest first.
    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.order.into_iter().collect()
    }
}

impl<F: Fn(u32) -> bool> Collector for NearestTrajectories<F> {
    fn offer(&mut self, segment: &Segment, distance: f64) {
        if self.k == 0 {
            return;
        }
        // Beyond the threshold a segment can neither enter the set nor
        // improve a member's representative.
        if matches!(self.threshold(), Some(th) if distance > th) {
            return;
        }
        let t = segment.id.trajectory;
        let n = Neighbor {
            segment: *segment,
            distance,
        };
        if let Some(current) = self.best.get(&t) {
            if n < *current {
                self.order.remove(current);
                self.order.insert(n);
                self.best.insert(t, n);
            }
            return;
        }
        if !(self.eligible)(t) {
            return;
        }
        if self.order.len() >= self.k {
            let worst = *self.order.last().expect("non-empty");
            if n >= worst {
                return;
            }
            self.order.remove(&worst);
            self.best.remove(&worst.segment.id.trajectory);
        }
        self.order.insert(n);
        self.best.insert(t, n);
    }

    fn threshold(&self) -> Option<f64> {
        if self.k > 0 && self.order.len() >= self.k {
            self.order.last().map(|n| n.distance)
        } else {
            None
        }
    }
}

/// Search strategy / index flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Exhaustive scan of every segment.
    #[serde(rename = "linear")]
    Linear,
    /// Single-level uniform grid at the finest granularity.
    #[serde(rename = "UG")]
    Uniform,
    /// Best-first descent from the root of the hierarchical grid.
    #[serde(rename = "HG_t")]
    TopDown,
    /// Stack-driven ascent from the query's finest cell, never switching to
    /// best-first.
    #[serde(rename = "HG_b")]
    BottomUp,
    /// Ascent from the query's finest cell, then best-first descent once
    /// the root is reached.
    #[serde(rename = "HG_+")]
    BottomUpDown,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Linear,
        Strategy::Uniform,
        Strategy::TopDown,
        Strategy::BottomUp,
        Strategy::BottomUpDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Linear => "linear",
            Strategy::Uniform => "UG",
            Strategy::TopDown => "HG_t",
            Strategy::BottomUp => "HG_b",
            Strategy::BottomUpDown => "HG_+",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// A mutable segment index behind one of the [`Strategy`] variants.
#[derive(Debug, Clone)]
pub enum SpatialIndex {
    Linear(LinearIndex),
    Uniform(UniformGrid),
    Hierarchical(HierarchicalGrid, Strategy),
}

impl SpatialIndex {
    pub fn build(strategy: Strategy, finest: u32, segments: impl IntoIterator<Item = Segment>) -> Self {
        match strategy {
            Strategy::Linear => SpatialIndex::Linear(LinearIndex::build(segments)),
            Strategy::Uniform => SpatialIndex::Uniform(UniformGrid::build(finest, segments)),
            s => SpatialIndex::Hierarchical(HierarchicalGrid::build(finest, segments), s),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SpatialIndex::Linear(ix) => ix.len(),
            SpatialIndex::Uniform(ix) => ix.len(),
            SpatialIndex::Hierarchical(ix, _) => ix.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, segment: Segment) {
        match self {
            SpatialIndex::Linear(ix) => ix.insert(segment),
            SpatialIndex::Uniform(ix) => ix.insert(segment),
            SpatialIndex::Hierarchical(ix, _) => ix.insert(segment),
        }
    }

    pub fn remove(&mut self, segment: &Segment) -> Result<()> {
        match self {
            SpatialIndex::Linear(ix) => ix.remove(segment),
            SpatialIndex::Uniform(ix) => ix.remove(segment),
            SpatialIndex::Hierarchical(ix, _) => ix.remove(segment),
        }
    }

    /// Removes then adds; the index afterwards equals a fresh build over
    /// the edited segment set.
    pub fn update_after_edit(&mut self, removed: &[Segment], added: &[Segment]) -> Result<()> {
        for s in removed {
            self.remove(s)?;
        }
        for s in added {
            self.insert(*s);
        }
        Ok(())
    }

    pub fn search<C: Collector>(&self, q: Point, collector: &mut C) -> SearchStats {
        match self {
            SpatialIndex::Linear(ix) => ix.search(q, collector),
            SpatialIndex::Uniform(ix) => ix.search(q, collector),
            SpatialIndex::Hierarchical(ix, Strategy::TopDown) => search_topdown(ix, q, collector),
            SpatialIndex::Hierarchical(ix, Strategy::BottomUp) => search_bottomup(ix, q, collector),
            SpatialIndex::Hierarchical(ix, _) => search_bud(ix, q, collector),
        }
    }

    pub fn knn(&self, q: Point, k: usize) -> SearchResult {
        let mut c = TopK::new(k);
        let stats = self.search(q, &mut c);
        SearchResult {
            neighbors: c.into_sorted(),
            stats,
        }
    }
}
