//! Point/trajectory frequency distributions, point weights, top-m signatures
//! and the per-trajectory point list handed to local perturbation.
//!
//! A point is weighted by how representative it is of its trajectory
//! (`pf / |τ|`) times how distinctive it is in the dataset
//! (`ln(|D| / tf)`). The top-m points by weight form the trajectory's
//! signature; the union of all signatures is the candidate set whose
//! frequencies get perturbed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::geo::{Dataset, Location, Trajectory};

/// Point frequencies of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PfDistribution {
    pub trajectory_id: u32,
    pub counts: BTreeMap<Location, usize>,
}

impl PfDistribution {
    pub fn get(&self, loc: &Location) -> usize {
        self.counts.get(loc).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Trajectory frequencies over a dataset: for each location, the number of
/// distinct trajectories visiting it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TfDistribution {
    pub counts: BTreeMap<Location, usize>,
}

impl TfDistribution {
    pub fn get(&self, loc: &Location) -> usize {
        self.counts.get(loc).copied().unwrap_or(0)
    }
}

pub fn compute_pf(traj: &Trajectory) -> PfDistribution {
    let mut counts = BTreeMap::new();
    for loc in traj.locations() {
        *counts.entry(loc).or_insert(0) += 1;
    }
    PfDistribution {
        trajectory_id: traj.id,
        counts,
    }
}

pub fn compute_tf(dataset: &Dataset) -> TfDistribution {
    let mut counts: FxHashMap<Location, usize> = FxHashMap::default();
    for traj in &dataset.trajectories {
        let distinct: BTreeSet<Location> = traj.locations().collect();
        for loc in distinct {
            *counts.entry(loc).or_insert(0) += 1;
        }
    }
    TfDistribution {
        counts: counts.into_iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub location: Location,
    pub pf: usize,
    pub weight: f64,
}

/// `(pf / len) · ln(dataset_size / tf)`.
pub fn point_weight(pf: usize, traj_len: usize, tf: usize, dataset_size: usize) -> f64 {
    if pf == 0 || tf == 0 || traj_len == 0 {
        return 0.0;
    }
    let representativeness = pf as f64 / traj_len as f64;
    let distinctiveness = (dataset_size as f64 / tf as f64).ln();
    // tf == |D| gives exactly zero; guard against -0.0 from rounding.
    (representativeness * distinctiveness).max(0.0)
}

/// Ranking order: heavier first, then higher pf, then smaller cell key.
pub fn rank_cmp(a: &WeightedPoint, b: &WeightedPoint) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(b.pf.cmp(&a.pf))
        .then(a.location.cmp(&b.location))
}

/// All distinct points of `traj`, weighted and sorted by [`rank_cmp`].
pub fn weigh_and_rank(
    traj: &Trajectory,
    pf: &PfDistribution,
    tf: &TfDistribution,
    dataset_size: usize,
) -> Vec<WeightedPoint> {
    let mut ranked: Vec<WeightedPoint> = pf
        .counts
        .iter()
        .map(|(&location, &count)| WeightedPoint {
            location,
            pf: count,
            weight: point_weight(count, traj.len(), tf.get(&location), dataset_size),
        })
        .collect();
    ranked.sort_by(rank_cmp);
    ranked
}

/// Full ranked point lists for every trajectory; the first `m` entries of
/// each list are its signature.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSet {
    pub m: usize,
    pub ranked: Vec<Vec<WeightedPoint>>,
}

impl SignatureSet {
    /// Top-m signature of trajectory `i` (shorter when it has fewer
    /// distinct points).
    pub fn signature(&self, i: usize) -> &[WeightedPoint] {
        let r = &self.ranked[i];
        &r[..self.m.min(r.len())]
    }
}

/// Union of all top-m signatures.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    pub points: BTreeSet<Location>,
}

impl CandidateSet {
    pub fn contains(&self, loc: &Location) -> bool {
        self.points.contains(loc)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn extract_signatures(dataset: &Dataset, m: usize) -> (SignatureSet, CandidateSet) {
    let tf = compute_tf(dataset);
    extract_signatures_with(dataset, &tf, m)
}

/// Same as [`extract_signatures`] with a precomputed TF distribution.
pub fn extract_signatures_with(dataset: &Dataset, tf: &TfDistribution, m: usize) -> (SignatureSet, CandidateSet) {
    let n = dataset.len();
    let ranked: Vec<Vec<WeightedPoint>> = dataset
        .trajectories
        .iter()
        .map(|t| weigh_and_rank(t, &compute_pf(t), tf, n))
        .collect();
    let signatures = SignatureSet { m, ranked };
    let points = (0..n)
        .flat_map(|i| signatures.signature(i).iter().map(|w| w.location))
        .collect();
    (signatures, CandidateSet { points })
}

/// Locations whose local frequencies get perturbed for one trajectory, in
/// perturbation order. The first `m` entries (Stage-1) are the signature;
/// the rest (Stage-2) are lower-ranked points that also appear in the
/// candidate set, padded by random picks when those run out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointList {
    pub trajectory_id: u32,
    pub points: Vec<Location>,
}

/// Builds the point list of one trajectory from its full ranked list.
///
/// Walks the ranking and keeps a point if its rank is within the top `m` or
/// it belongs to `candidates`, stopping at `2m`. If the walk ends short, the
/// remaining distinct points are sampled uniformly without replacement and
/// appended.
pub fn select_point_list<R: Rng + ?Sized>(
    trajectory_id: u32,
    ranked: &[WeightedPoint],
    candidates: &CandidateSet,
    m: usize,
    rng: &mut R,
) -> PointList {
    let target = (2 * m).min(ranked.len());
    let mut points = Vec::with_capacity(target);
    let mut skipped = Vec::new();
    for (rank, wp) in ranked.iter().enumerate() {
        if points.len() == target {
            break;
        }
        if rank < m || candidates.contains(&wp.location) {
            points.push(wp.location);
        } else {
            skipped.push(wp.location);
        }
    }
    if points.len() < target {
        // Anything the walk never reached is also eligible for the fill.
        let walked = points.len() + skipped.len();
        skipped.extend(ranked[walked..].iter().map(|w| w.location));
        let need = target - points.len();
        for k in 0..need {
            let j = rng.gen_range(k..skipped.len());
            skipped.swap(k, j);
        }
        points.extend_from_slice(&skipped[..need]);
    }
    PointList { trajectory_id, points }
}
