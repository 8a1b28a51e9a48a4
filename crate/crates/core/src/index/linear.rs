use rustc_hash::FxHashMap;

use super::{Collector, SearchResult, SearchStats, TopK};
use crate::geo::{Point, Segment, SegmentId};
use crate::{Error, Result};

/// Exact K nearest segments by exhaustive scan. This is the oracle every
/// other strategy is checked against.
pub fn knn_linear(q: Point, segments: &[Segment], k: usize) -> SearchResult {
    let mut c = TopK::new(k);
    for s in segments {
        c.offer(s, s.distance_to(q));
    }
    SearchResult {
        neighbors: c.into_sorted(),
        stats: SearchStats {
            cells_visited: 0,
            segments_checked: segments.len(),
        },
    }
}

/// Flat, mutable segment store searched by full scan.
#[derive(Debug, Clone, Default)]
pub struct LinearIndex {
    segments: Vec<Segment>,
    slot: FxHashMap<SegmentId, usize>,
}

impl LinearIndex {
    pub fn build(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut ix = Self::default();
        for s in segments {
            ix.insert(s);
        }
        ix
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn insert(&mut self, s: Segment) {
        self.slot.insert(s.id, self.segments.len());
        self.segments.push(s);
    }

    pub fn remove(&mut self, s: &Segment) -> Result<()> {
        let i = self.slot.remove(&s.id).ok_or(Error::NotIndexed(s.id))?;
        self.segments.swap_remove(i);
        if let Some(moved) = self.segments.get(i) {
            self.slot.insert(moved.id, i);
        }
        Ok(())
    }

    pub fn search<C: Collector>(&self, q: Point, c: &mut C) -> SearchStats {
        for s in &self.segments {
            c.offer(s, s.distance_to(q));
        }
        SearchStats {
            cells_visited: 0,
            segments_checked: self.segments.len(),
        }
    }
}
