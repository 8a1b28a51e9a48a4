use rustc_hash::{FxHashMap, FxHashSet};

use super::{Collector, SearchStats};
use crate::geo::{cell_index, Point, Segment};
use crate::{Error, Result};

/// Single-level uniform grid. A segment is registered in every cell its
/// bounding box overlaps; searches expand square rings around the query
/// cell until the ring boundary is farther than the current threshold.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    granularity: u32,
    cells: FxHashMap<(u32, u32), Vec<Segment>>,
    len: usize,
}

impl UniformGrid {
    pub fn new(granularity: u32) -> Self {
        assert!(granularity >= 1);
        Self {
            granularity,
            cells: FxHashMap::default(),
            len: 0,
        }
    }

    pub fn build(granularity: u32, segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut g = Self::new(granularity);
        for s in segments {
            g.insert(s);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn cell_span(&self, s: &Segment) -> (u32, u32, u32, u32) {
        let g = self.granularity;
        (
            cell_index(s.a.x.min(s.b.x), g),
            cell_index(s.a.y.min(s.b.y), g),
            cell_index(s.a.x.max(s.b.x), g),
            cell_index(s.a.y.max(s.b.y), g),
        )
    }

    pub fn insert(&mut self, s: Segment) {
        let (x0, y0, x1, y1) = self.cell_span(&s);
        for x in x0..=x1 {
            for y in y0..=y1 {
                self.cells.entry((x, y)).or_default().push(s);
            }
        }
        self.len += 1;
    }

    pub fn remove(&mut self, s: &Segment) -> Result<()> {
        let (x0, y0, x1, y1) = self.cell_span(s);
        let mut found = false;
        for x in x0..=x1 {
            for y in y0..=y1 {
                if let Some(v) = self.cells.get_mut(&(x, y)) {
                    if let Some(i) = v.iter().position(|t| t.id == s.id) {
                        v.swap_remove(i);
                        found = true;
                        if v.is_empty() {
                            self.cells.remove(&(x, y));
                        }
                    }
                }
            }
        }
        if !found {
            return Err(Error::NotIndexed(s.id));
        }
        self.len -= 1;
        Ok(())
    }

    pub fn search<C: Collector>(&self, q: Point, c: &mut C) -> SearchStats {
        let mut stats = SearchStats::default();
        if self.len == 0 {
            return stats;
        }
        let g = self.granularity as i64;
        let cell = 1.0 / self.granularity as f64;
        let cx = cell_index(q.x, self.granularity) as i64;
        let cy = cell_index(q.y, self.granularity) as i64;
        let mut seen = FxHashSet::default();
        let max_ring = cx.max(g - 1 - cx).max(cy).max(g - 1 - cy);
        for r in 0..=max_ring {
            let (x0, x1, y0, y1) = (cx - r, cx + r, cy - r, cy + r);
            for x in x0.max(0)..=x1.min(g - 1) {
                for y in y0.max(0)..=y1.min(g - 1) {
                    let on_ring = x == x0 || x == x1 || y == y0 || y == y1;
                    if !on_ring {
                        continue;
                    }
                    stats.cells_visited += 1;
                    let Some(segs) = self.cells.get(&(x as u32, y as u32)) else {
                        continue;
                    };
                    for s in segs {
                        if seen.insert(s.id) {
                            stats.segments_checked += 1;
                            c.offer(s, s.distance_to(q));
                        }
                    }
                }
            }
            // Everything not yet seen lies outside the explored square;
            // sides clipped by the domain boundary have nothing beyond them.
            let mut bound = f64::INFINITY;
            if x0 > 0 {
                bound = bound.min(q.x - x0 as f64 * cell);
            }
            if x1 < g - 1 {
                bound = bound.min((x1 + 1) as f64 * cell - q.x);
            }
            if y0 > 0 {
                bound = bound.min(q.y - y0 as f64 * cell);
            }
            if y1 < g - 1 {
                bound = bound.min((y1 + 1) as f64 * cell - q.y);
            }
            if seen.len() == self.len {
                break;
            }
            if let Some(t) = c.threshold() {
                if t < bound {
                    break;
                }
            }
        }
        stats
    }
}
