use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use crate::geo::{cell_index, Point, Segment, SegmentId};
use crate::{Error, Result};

/// Address of a grid cell: level `h` (1 = root) and its indices in the
/// `2^(h−1) × 2^(h−1)` grid of that level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
}

impl CellKey {
    pub const ROOT: CellKey = CellKey { level: 1, ix: 0, iy: 0 };

    pub fn granularity(&self) -> u32 {
        1 << (self.level - 1)
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.level > 1).then(|| CellKey {
            level: self.level - 1,
            ix: self.ix >> 1,
            iy: self.iy >> 1,
        })
    }

    /// Quadrant `q ∈ 0..4` one level down.
    pub fn child(&self, q: u8) -> CellKey {
        CellKey {
            level: self.level + 1,
            ix: (self.ix << 1) | (q & 1) as u32,
            iy: (self.iy << 1) | (q >> 1) as u32,
        }
    }

    /// Ancestor at `level` (itself if `level == self.level`).
    pub fn ancestor(&self, level: u8) -> CellKey {
        let shift = self.level - level;
        CellKey {
            level,
            ix: self.ix >> shift,
            iy: self.iy >> shift,
        }
    }

    /// Closed coverage rectangle `(min, max)`.
    pub fn coverage(&self) -> (Point, Point) {
        let r = self.granularity() as f64;
        (
            Point::new(self.ix as f64 / r, self.iy as f64 / r),
            Point::new((self.ix + 1) as f64 / r, (self.iy + 1) as f64 / r),
        )
    }
}

/// Minimum distance from `q` to the closed rectangle of `cell`; zero inside.
#[inline]
pub fn min_dist(q: Point, cell: &CellKey) -> f64 {
    let (lo, hi) = cell.coverage();
    let dx = (lo.x - q.x).max(0.0).max(q.x - hi.x);
    let dy = (lo.y - q.y).max(0.0).max(q.y - hi.y);
    if dx == 0.0 {
        dy
    } else if dy == 0.0 {
        dx
    } else {
        (dx * dx + dy * dy).sqrt()
    }
}

/// Number of levels for a finest granularity (a power of two).
pub(crate) fn levels_for(finest: u32) -> u8 {
    assert!(finest.is_power_of_two(), "finest granularity must be a power of two");
    finest.trailing_zeros() as u8 + 1
}

/// Deepest cell holding both endpoints of `s` in a hierarchy whose finest
/// level has `finest` cells per side.
pub fn best_fit_cell(s: &Segment, finest: u32) -> CellKey {
    let levels = levels_for(finest);
    let (ax, ay) = (cell_index(s.a.x, finest), cell_index(s.a.y, finest));
    let (bx, by) = (cell_index(s.b.x, finest), cell_index(s.b.y, finest));
    let diff = (ax ^ bx) | (ay ^ by);
    let split_bits = (32 - diff.leading_zeros()) as u8;
    CellKey {
        level: levels - split_bits,
        ix: ax >> split_bits,
        iy: ay >> split_bits,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridCell {
    pub segments: Vec<Segment>,
    /// Segments stored here or in any descendant.
    pub subtree: usize,
    /// Bit `q` set when quadrant child `q` is materialized.
    pub children: u8,
}

/// Segment-based hierarchical grid.
///
/// Only cells that hold a segment, and their ancestors, are materialized;
/// the root always exists. Parent/child links are implicit in [`CellKey`]
/// arithmetic plus the `children` bitmask.
#[derive(Debug, Clone)]
pub struct HierarchicalGrid {
    finest: u32,
    levels: u8,
    cells: FxHashMap<CellKey, GridCell>,
    len: usize,
}

impl HierarchicalGrid {
    pub fn new(finest: u32) -> Self {
        let levels = levels_for(finest);
        let mut cells = FxHashMap::default();
        cells.insert(CellKey::ROOT, GridCell::default());
        Self {
            finest,
            levels,
            cells,
            len: 0,
        }
    }

    pub fn build(finest: u32, segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut g = Self::new(finest);
        for s in segments {
            g.insert(s);
        }
        g
    }

    pub fn finest(&self) -> u32 {
        self.finest
    }

    pub fn levels(&self) -> u8 {
        self.levels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell(&self, key: &CellKey) -> Option<&GridCell> {
        self.cells.get(key)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &GridCell)> {
        self.cells.iter()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn children_of(&self, key: &CellKey) -> impl Iterator<Item = CellKey> + '_ {
        let mask = self.cells.get(key).map_or(0, |c| c.children);
        let key = *key;
        (0..4u8)
            .filter(move |q| mask & (1 << q) != 0)
            .map(move |q| key.child(q))
    }

    pub fn best_fit(&self, s: &Segment) -> CellKey {
        best_fit_cell(s, self.finest)
    }

    pub fn insert(&mut self, s: Segment) {
        let target = self.best_fit(&s);
        for level in 1..=target.level {
            let key = target.ancestor(level);
            let cell = self.cells.entry(key).or_default();
            cell.subtree += 1;
            if level < target.level {
                let child = target.ancestor(level + 1);
                cell.children |= 1 << quadrant(&child);
            }
        }
        self.cells.get_mut(&target).expect("just created").segments.push(s);
        self.len += 1;
    }

    pub fn remove(&mut self, s: &Segment) -> Result<()> {
        let target = self.best_fit(s);
        let cell = self.cells.get_mut(&target).ok_or(Error::NotIndexed(s.id))?;
        let pos = cell
            .segments
            .iter()
            .position(|x| x.id == s.id)
            .ok_or(Error::NotIndexed(s.id))?;
        cell.segments.swap_remove(pos);
        for level in (1..=target.level).rev() {
            let key = target.ancestor(level);
            let cell = self.cells.get_mut(&key).expect("ancestor chain");
            cell.subtree -= 1;
            if cell.subtree == 0 && level > 1 {
                self.cells.remove(&key);
                let parent = self.cells.get_mut(&key.ancestor(level - 1)).expect("ancestor chain");
                parent.children &= !(1 << quadrant(&key));
            }
        }
        self.len -= 1;
        Ok(())
    }

    /// Deepest materialized cell whose coverage contains `q`.
    pub fn locate(&self, q: Point) -> CellKey {
        let (fx, fy) = (cell_index(q.x, self.finest), cell_index(q.y, self.finest));
        let finest_key = CellKey {
            level: self.levels,
            ix: fx,
            iy: fy,
        };
        let mut key = CellKey::ROOT;
        while key.level < self.levels {
            let child = finest_key.ancestor(key.level + 1);
            let mask = self.cells[&key].children;
            if mask & (1 << quadrant(&child)) == 0 {
                break;
            }
            key = child;
        }
        key
    }

    /// Canonical form for structural comparison: per cell, the sorted
    /// segment ids, subtree count and child mask.
    pub fn canonical(&self) -> BTreeMap<CellKey, (Vec<SegmentId>, usize, u8)> {
        self.cells
            .iter()
            .map(|(k, c)| {
                let mut ids: Vec<SegmentId> = c.segments.iter().map(|s| s.id).collect();
                ids.sort();
                (*k, (ids, c.subtree, c.children))
            })
            .collect()
    }

    /// Every stored segment, in no particular order.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.cells.values().flat_map(|c| c.segments.iter())
    }
}

impl PartialEq for HierarchicalGrid {
    fn eq(&self, other: &Self) -> bool {
        self.finest == other.finest && self.len == other.len && self.canonical() == other.canonical()
    }
}

#[inline]
fn quadrant(child: &CellKey) -> u8 {
    ((child.ix & 1) | ((child.iy & 1) << 1)) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::SegmentId;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn seg(t: u32, a: (f64, f64), b: (f64, f64)) -> Segment {
        Segment::new(
            Point::new(a.0, a.1),
            Point::new(b.0, b.1),
            SegmentId {
                trajectory: t,
                start: 0,
                end: 1,
            },
        )
    }

    /// Brute force: scan every level and keep the deepest one where both
    /// endpoints land in the same cell.
    fn best_fit_oracle(s: &Segment, finest: u32) -> CellKey {
        let levels = levels_for(finest);
        let mut best = CellKey::ROOT;
        for level in 1..=levels {
            let r = 1u32 << (level - 1);
            let a = (cell_index(s.a.x, r), cell_index(s.a.y, r));
            let b = (cell_index(s.b.x, r), cell_index(s.b.y, r));
            if a == b {
                best = CellKey {
                    level,
                    ix: a.0,
                    iy: a.1,
                };
            }
        }
        best
    }

    #[test]
    fn best_fit_examples() {
        let s = seg(0, (0.1, 0.1), (0.101, 0.1001));
        assert_eq!(best_fit_cell(&s, 512).level, 10);
        let s = seg(0, (0.2, 0.2), (0.7, 0.2));
        assert_eq!(best_fit_cell(&s, 512), CellKey::ROOT);
        let s = seg(0, (0.10, 0.10), (0.20, 0.20));
        let got = best_fit_cell(&s, 512);
        assert_eq!(got, best_fit_oracle(&s, 512));
        // 0.10 and 0.20 share [0, 0.25) and split at [0, 0.125) vs [0.125, 0.25).
        assert_eq!(got, CellKey { level: 3, ix: 0, iy: 0 });
    }

    #[test]
    fn min_dist_examples() {
        let g = CellKey { level: 3, ix: 0, iy: 0 }; // [0, 0.25]²
        assert_eq!(min_dist(Point::new(0.1, 0.2), &g), 0.0);
        assert_eq!(min_dist(Point::new(0.25, 0.25), &g), 0.0);
        assert!((min_dist(Point::new(0.5, 0.5), &g) - (2.0 * 0.25f64 * 0.25).sqrt()).abs() < 1e-15);
        assert!((min_dist(Point::new(0.5, 0.5), &g) - 0.35355).abs() < 1e-5);
        assert!((min_dist(Point::new(0.1, 0.5), &g) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_and_single_segment_builds() {
        let g = HierarchicalGrid::build(512, []);
        assert_eq!(g.cell_count(), 1);
        assert!(g.cell(&CellKey::ROOT).is_some());
        let s = seg(0, (0.1, 0.1), (0.1001, 0.1001));
        let g = HierarchicalGrid::build(512, [s]);
        let bf = best_fit_cell(&s, 512);
        assert_eq!(g.cell_count(), bf.level as usize);
        assert_eq!(g.cell(&bf).unwrap().segments.len(), 1);
    }

    /// Layout mirroring the five-segment hierarchy example: one segment in
    /// the root, two in level-2 cells, one at level 3 and one at level 4.
    #[test]
    fn figure_three_assignment_pattern() {
        let segs = [
            seg(0, (0.10, 0.90), (0.90, 0.10)), // spans quadrants: root
            seg(1, (0.60, 0.10), (0.90, 0.40)), // within [0.5,1]x[0,0.5]
            seg(2, (0.55, 0.60), (0.95, 0.90)), // within [0.5,1]x[0.5,1]
            seg(3, (0.05, 0.55), (0.20, 0.70)), // within [0,0.25]x[0.5,0.75]
            seg(4, (0.30, 0.30), (0.36, 0.35)), // within [0.25,0.375]x[0.25,0.375]
        ];
        let g = HierarchicalGrid::build(512, segs);
        let at = |t: usize| best_fit_cell(&segs[t], 512);
        assert_eq!(at(0), CellKey::ROOT);
        assert_eq!(at(1), CellKey { level: 2, ix: 1, iy: 0 });
        assert_eq!(at(2), CellKey { level: 2, ix: 1, iy: 1 });
        assert_eq!(at(3), CellKey { level: 3, ix: 0, iy: 2 });
        assert_eq!(at(4), CellKey { level: 4, ix: 2, iy: 2 });
        for (t, s) in segs.iter().enumerate() {
            assert!(g.cell(&at(t)).unwrap().segments.iter().any(|x| x.id == s.id));
        }
    }

    #[test]
    fn removing_unindexed_segment_fails() {
        let mut g = HierarchicalGrid::build(64, [seg(0, (0.1, 0.1), (0.2, 0.2))]);
        assert!(matches!(
            g.remove(&seg(7, (0.1, 0.1), (0.2, 0.2))),
            Err(Error::NotIndexed(_))
        ));
    }

    fn segment_strategy() -> impl Strategy<Value = Vec<Segment>> {
        prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, -0.3f64..0.3, -0.3f64..0.3), 0..60).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, dx, dy))| seg(i as u32, (x, y), ((x + dx).clamp(0.0, 1.0), (y + dy).clamp(0.0, 1.0))))
                .collect()
        })
    }

    fn check_structure(g: &HierarchicalGrid) {
        let mut seen = BTreeSet::new();
        let mut stack = vec![CellKey::ROOT];
        while let Some(k) = stack.pop() {
            let c = g.cell(&k).unwrap();
            let below: usize = g.children_of(&k).map(|ch| g.cell(&ch).unwrap().subtree).sum();
            assert_eq!(c.subtree, c.segments.len() + below);
            if k != CellKey::ROOT {
                assert!(c.subtree > 0);
            }
            for s in &c.segments {
                assert_eq!(g.best_fit(s), k);
                assert!(seen.insert(s.id), "segment stored twice");
            }
            stack.extend(g.children_of(&k));
        }
        assert_eq!(seen.len(), g.len());
        // Every materialized cell is reachable.
        let reachable = {
            let mut n = 0;
            let mut st = vec![CellKey::ROOT];
            while let Some(k) = st.pop() {
                n += 1;
                st.extend(g.children_of(&k));
            }
            n
        };
        assert_eq!(reachable, g.cell_count());
    }

    proptest! {
        #[test]
        fn best_fit_matches_level_scan(segs in segment_strategy(), pow in 0u32..10) {
            for s in &segs {
                prop_assert_eq!(best_fit_cell(s, 1 << pow), best_fit_oracle(s, 1 << pow));
            }
        }

        #[test]
        fn incremental_updates_match_fresh_builds(segs in segment_strategy(), cut in any::<prop::sample::Index>()) {
            let mut g = HierarchicalGrid::build(64, segs.iter().copied());
            check_structure(&g);
            if segs.is_empty() { return Ok(()); }
            let k = cut.index(segs.len());
            for s in &segs[..k] {
                g.remove(s).unwrap();
            }
            check_structure(&g);
            prop_assert!(g == HierarchicalGrid::build(64, segs[k..].iter().copied()));
            for s in &segs[..k] {
                g.insert(*s);
            }
            prop_assert!(g == HierarchicalGrid::build(64, segs.iter().copied()));
        }

        #[test]
        fn pruning_bound_holds_for_subtrees(segs in segment_strategy(), qx in 0.0f64..=1.0, qy in 0.0f64..=1.0) {
            let g = HierarchicalGrid::build(64, segs.iter().copied());
            let q = Point::new(qx, qy);
            for (k, c) in g.cells() {
                let bound = min_dist(q, k);
                for s in &c.segments {
                    // Stored here, hence also within every ancestor.
                    for level in 1..=k.level {
                        prop_assert!(min_dist(q, &k.ancestor(level)) <= s.distance_to(q));
                    }
                    prop_assert!(bound <= s.distance_to(q));
                }
            }
        }
    }
}
