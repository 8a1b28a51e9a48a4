//! Privacy and utility metrics over an original/anonymized dataset pair.
//!
//! Trajectories are paired by position; [`pair_by_object`] lines up two
//! datasets by object id first.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::config::MetricParams;
use crate::geo::{cell_index, Dataset, Location, Point, Trajectory};
use crate::signature::extract_signatures;

/// Restricts both datasets to the objects present in each, in the order of
/// `original`. Returns the aligned pair and the object ids left out.
pub fn pair_by_object(original: &Dataset, anonymized: &Dataset) -> (Dataset, Dataset, Vec<String>) {
    let anon: HashMap<&str, &Trajectory> = anonymized
        .trajectories
        .iter()
        .map(|t| (t.object_id.as_str(), t))
        .collect();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut excluded = Vec::new();
    for t in &original.trajectories {
        match anon.get(t.object_id.as_str()) {
            Some(a) => {
                left.push(t.clone());
                right.push((*a).clone());
            }
            None => excluded.push(t.object_id.clone()),
        }
    }
    let kept: std::collections::HashSet<&str> = original.trajectories.iter().map(|t| t.object_id.as_str()).collect();
    excluded.extend(
        anonymized
            .trajectories
            .iter()
            .filter(|t| !kept.contains(t.object_id.as_str()))
            .map(|t| t.object_id.clone()),
    );
    excluded.sort();
    (
        Dataset::new(left, original.granularity),
        Dataset::new(right, anonymized.granularity),
        excluded,
    )
}

/// Fraction of anonymized trajectories whose top-`m` spatial signature
/// overlaps most with their own owner's reference signature.
///
/// Overlap is the sum over shared locations of the smaller of the two
/// weights. Ties go to the lowest reference index, so an anonymized
/// trajectory sharing nothing with anyone is matched to the first one.
pub fn linking_accuracy_spatial(reference: &Dataset, anonymized: &Dataset, m: usize) -> f64 {
    let n = anonymized.len().min(reference.len());
    if n == 0 {
        return 0.0;
    }
    let (ref_sigs, _) = extract_signatures(reference, m);
    let (anon_sigs, _) = extract_signatures(anonymized, m);
    let mut postings: HashMap<Location, Vec<(usize, f64)>> = HashMap::new();
    for j in 0..reference.len() {
        for w in ref_sigs.signature(j) {
            postings.entry(w.location).or_default().push((j, w.weight));
        }
    }
    let mut scores = vec![0.0f64; reference.len()];
    let mut touched = Vec::new();
    let mut hits = 0usize;
    for i in 0..n {
        for w in anon_sigs.signature(i) {
            if let Some(list) = postings.get(&w.location) {
                for &(j, rw) in list {
                    if scores[j] == 0.0 {
                        touched.push(j);
                    }
                    scores[j] += rw.min(w.weight);
                }
            }
        }
        let mut best = (0usize, scores[0]);
        for &j in &touched {
            if scores[j] > best.1 || (scores[j] == best.1 && j < best.0) {
                best = (j, scores[j]);
            }
        }
        if best.0 == i {
            hits += 1;
        }
        for &j in &touched {
            scores[j] = 0.0;
        }
        touched.clear();
    }
    hits as f64 / n as f64
}

/// Point-based information loss: share of original points without a
/// counterpart (multiset intersection of locations) in the paired
/// anonymized trajectory.
pub fn info_loss(original: &Dataset, anonymized: &Dataset) -> f64 {
    let total: usize = original.total_points();
    if total == 0 {
        return 0.0;
    }
    let kept: usize = original
        .trajectories
        .iter()
        .zip(&anonymized.trajectories)
        .map(|(a, b)| multiset_intersection(a, b))
        .sum();
    1.0 - kept as f64 / total as f64
}

fn multiset_intersection(a: &Trajectory, b: &Trajectory) -> usize {
    let mut counts: HashMap<Location, usize> = HashMap::new();
    for l in a.locations() {
        *counts.entry(l).or_default() += 1;
    }
    let mut shared = 0;
    for l in b.locations() {
        if let Some(c) = counts.get_mut(&l) {
            if *c > 0 {
                *c -= 1;
                shared += 1;
            }
        }
    }
    shared
}

/// Jensen–Shannon divergence in bits between two histograms over the same
/// support (normalized internally). Empty histograms count as identical.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
    if sp == 0.0 || sq == 0.0 {
        return if sp == sq { 0.0 } else { 1.0 };
    }
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).log2();
        }
    }
    js.clamp(0.0, 1.0)
}

/// JS divergence between two count maps over the union of their keys.
fn js_of_maps<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    let a: Vec<f64> = keys.iter().map(|k| p.get(*k).copied().unwrap_or(0.0)).collect();
    let b: Vec<f64> = keys.iter().map(|k| q.get(*k).copied().unwrap_or(0.0)).collect();
    js_divergence(&a, &b)
}

fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Largest distance between two points of the trajectory.
pub fn diameter(t: &Trajectory) -> f64 {
    let mut locs: Vec<Location> = t.locations().collect();
    locs.sort();
    locs.dedup();
    let hull = convex_hull(locs.iter().map(|l| l.center).collect());
    let mut best = 0.0f64;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max(a.dist(b));
        }
    }
    best
}

/// JS divergence of the trajectory-diameter histograms, `bins` equal-width
/// bins over the pooled range.
pub fn diameter_divergence(original: &Dataset, anonymized: &Dataset, bins: usize) -> f64 {
    let da: Vec<f64> = original.trajectories.iter().map(diameter).collect();
    let db: Vec<f64> = anonymized.trajectories.iter().map(diameter).collect();
    let (lo, hi) = da
        .iter()
        .chain(&db)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let hist = |ds: &[f64]| {
        let mut h = vec![0.0; bins];
        for &d in ds {
            let b = if hi > lo {
                (((d - lo) / (hi - lo)) * bins as f64).floor() as usize
            } else {
                0
            };
            h[b.min(bins - 1)] += 1.0;
        }
        h
    };
    js_divergence(&hist(&da), &hist(&db))
}

/// JS divergence of the distributions of (start cell, end cell) pairs on a
/// `grid × grid` partition.
pub fn trip_divergence(original: &Dataset, anonymized: &Dataset, grid: u32) -> f64 {
    let trips = |d: &Dataset| {
        let mut m: BTreeMap<(u32, u32, u32, u32), f64> = BTreeMap::new();
        for t in &d.trajectories {
            let (Some(s), Some(e)) = (t.points.first(), t.points.last()) else {
                continue;
            };
            let c = |p: Point| (cell_index(p.x, grid), cell_index(p.y, grid));
            let (s, e) = (c(s.location.center), c(e.location.center));
            *m.entry((s.0, s.1, e.0, e.1)).or_default() += 1.0;
        }
        m
    };
    js_of_maps(&trips(original), &trips(anonymized))
}

/// The `k` most frequent consecutive location pairs (self-transitions
/// excluded), most frequent first, ties by location order.
pub fn top_patterns(d: &Dataset, k: usize) -> Vec<(Location, Location)> {
    let mut counts: HashMap<(Location, Location), usize> = HashMap::new();
    for t in &d.trajectories {
        for w in t.points.windows(2) {
            if w[0].location != w[1].location {
                *counts.entry((w[0].location, w[1].location)).or_default() += 1;
            }
        }
    }
    let mut all: Vec<((Location, Location), usize)> = counts.into_iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(p, _)| p).collect()
}

/// F1 between the top-`k` frequent patterns of the two datasets.
pub fn frequent_pattern_f1(original: &Dataset, anonymized: &Dataset, k: usize) -> f64 {
    let a = top_patterns(original, k);
    let b = top_patterns(anonymized, k);
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let set: std::collections::HashSet<_> = a.iter().collect();
    let shared = b.iter().filter(|p| set.contains(p)).count();
    2.0 * shared as f64 / (a.len() + b.len()) as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub la_s: f64,
    pub inf: f64,
    pub de: f64,
    pub te: f64,
    pub ffp: f64,
    pub trajectories: usize,
    /// Object ids present in only one of the two datasets.
    pub excluded: Vec<String>,
    pub params: MetricParams,
}

/// All metrics on two datasets paired by object id.
pub fn evaluate(original: &Dataset, anonymized: &Dataset, params: &MetricParams) -> MetricReport {
    let (a, b, excluded) = pair_by_object(original, anonymized);
    MetricReport {
        la_s: linking_accuracy_spatial(&a, &b, params.m),
        inf: info_loss(&a, &b),
        de: diameter_divergence(&a, &b, params.bins),
        te: trip_divergence(&a, &b, params.te_grid),
        ffp: frequent_pattern_f1(&a, &b, params.ffp_k),
        trajectories: a.len(),
        excluded,
        params: *params,
    }
}
