//! K-nearest-segment search over a [`HierarchicalGrid`].
//!
//! All strategies prune a cell once the collector is full and the cell's
//! MINdist exceeds the current threshold; a cell's MINdist lower-bounds the
//! distance to every segment stored in it or below it. Cells at exactly the
//! threshold are still explored, so ties resolve the same way as a linear
//! scan.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashSet;

use super::grid::{min_dist, CellKey, HierarchicalGrid};
use super::{Collector, SearchResult, SearchStats, TopK};
use crate::geo::Point;

/// Cell in the best-first queue, nearest first.
#[derive(Clone, Copy)]
struct Pending {
    dist: f64,
    key: CellKey,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.key.cmp(&other.key))
    }
}

#[inline]
fn prunable<C: Collector>(c: &C, dist: f64) -> bool {
    matches!(c.threshold(), Some(t) if dist > t)
}

#[inline]
fn scan<C: Collector>(grid: &HierarchicalGrid, key: &CellKey, q: Point, c: &mut C, stats: &mut SearchStats) {
    stats.cells_visited += 1;
    if let Some(cell) = grid.cell(key) {
        stats.segments_checked += cell.segments.len();
        for s in &cell.segments {
            c.offer(s, s.distance_to(q));
        }
    }
}

/// Unvisited children of `key` with their MINdist, farthest first so that
/// pushing them in order leaves the nearest on top of a stack.
fn children_far_first(
    grid: &HierarchicalGrid,
    key: &CellKey,
    q: Point,
    visited: &FxHashSet<CellKey>,
) -> impl Iterator<Item = Pending> {
    let mut kids: Vec<Pending> = grid
        .children_of(key)
        .filter(|k| !visited.contains(k))
        .map(|k| Pending {
            dist: min_dist(q, &k),
            key: k,
        })
        .collect();
    kids.sort_unstable_by(|a, b| b.cmp(a));
    kids.into_iter()
}

/// Best-first search from the root, ordered by MINdist.
pub fn search_topdown<C: Collector>(grid: &HierarchicalGrid, q: Point, c: &mut C) -> SearchStats {
    let mut stats = SearchStats::default();
    let mut queue = BinaryHeap::new();
    queue.push(Reverse(Pending {
        dist: min_dist(q, &CellKey::ROOT),
        key: CellKey::ROOT,
    }));
    while let Some(Reverse(p)) = queue.pop() {
        if prunable(c, p.dist) {
            break;
        }
        scan(grid, &p.key, q, c, &mut stats);
        for k in grid.children_of(&p.key) {
            let d = min_dist(q, &k);
            if !prunable(c, d) {
                queue.push(Reverse(Pending { dist: d, key: k }));
            }
        }
    }
    stats
}

/// Shared driver for the two strategies that start at the query's own cell.
/// With `switch_at_root` the search hands over to a best-first queue once
/// the root has been reached (bottom-up-down); without it the stack drives
/// the whole search (plain bottom-up).
fn search_from_leaf<C: Collector>(grid: &HierarchicalGrid, q: Point, c: &mut C, switch_at_root: bool) -> SearchStats {
    let mut stats = SearchStats::default();
    let mut visited: FxHashSet<CellKey> = FxHashSet::default();
    let mut stack: Vec<Pending> = Vec::new();
    let mut queue: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();

    let start = grid.locate(q);
    let first = Pending {
        dist: min_dist(q, &start),
        key: start,
    };
    let mut root_access = switch_at_root && start == CellKey::ROOT;
    if root_access {
        queue.push(Reverse(first));
    } else {
        stack.push(first);
    }

    loop {
        let current = if root_access {
            match queue.pop() {
                Some(Reverse(p)) => {
                    if prunable(c, p.dist) {
                        break;
                    }
                    p
                }
                None => break,
            }
        } else {
            match stack.pop() {
                Some(p) => {
                    if prunable(c, p.dist) {
                        continue;
                    }
                    p
                }
                None => break,
            }
        };
        if !visited.insert(current.key) {
            continue;
        }
        scan(grid, &current.key, q, c, &mut stats);

        if !root_access {
            if let Some(parent) = current.key.parent().filter(|p| !visited.contains(p)) {
                // Ancestors of the start cell contain q: MINdist 0.
                let pending = Pending {
                    dist: min_dist(q, &parent),
                    key: parent,
                };
                if switch_at_root && parent == CellKey::ROOT {
                    root_access = true;
                    queue.push(Reverse(pending));
                    queue.extend(stack.drain(..).map(Reverse));
                } else {
                    stack.push(pending);
                }
            }
        }
        for child in children_far_first(grid, &current.key, q, &visited) {
            if root_access {
                if !prunable(c, child.dist) {
                    queue.push(Reverse(child));
                }
            } else {
                stack.push(child);
            }
        }
    }
    stats
}

/// Bottom-up-down search: the primary strategy.
pub fn search_bud<C: Collector>(grid: &HierarchicalGrid, q: Point, c: &mut C) -> SearchStats {
    search_from_leaf(grid, q, c, true)
}

pub fn search_bottomup<C: Collector>(grid: &HierarchicalGrid, q: Point, c: &mut C) -> SearchStats {
    search_from_leaf(grid, q, c, false)
}

fn knn_with(
    grid: &HierarchicalGrid,
    q: Point,
    k: usize,
    f: fn(&HierarchicalGrid, Point, &mut TopK) -> SearchStats,
) -> SearchResult {
    let mut c = TopK::new(k);
    if k == 0 {
        return SearchResult::default();
    }
    let stats = f(grid, q, &mut c);
    SearchResult {
        neighbors: c.into_sorted(),
        stats,
    }
}

/// K nearest segments, bottom-up then top-down.
pub fn knn_bud(grid: &HierarchicalGrid, q: Point, k: usize) -> SearchResult {
    knn_with(grid, q, k, search_bud::<TopK>)
}

pub fn knn_topdown(grid: &HierarchicalGrid, q: Point, k: usize) -> SearchResult {
    knn_with(grid, q, k, search_topdown::<TopK>)
}

pub fn knn_bottomup(grid: &HierarchicalGrid, q: Point, k: usize) -> SearchResult {
    knn_with(grid, q, k, search_bottomup::<TopK>)
}
