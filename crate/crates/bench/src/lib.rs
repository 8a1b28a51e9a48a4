//! Shared fixtures for the benchmarks.

use trajdp::geo::index_segments;
use trajdp::synth::{self, SynthConfig};
use trajdp::{Dataset, Point, Segment};

/// Synthetic corpus and all of its segments.
pub fn corpus(objects: usize, avg_len: usize, seed: u64) -> (Dataset, Vec<Segment>) {
    let d = synth::dataset(&SynthConfig::new(objects, avg_len, seed));
    let segs = d.trajectories.iter().flat_map(index_segments).collect();
    (d, segs)
}

/// `n` query points spread over the corpus: every k-th point center,
/// shifted by half a cell so that most queries lie off the data.
pub fn queries(d: &Dataset, n: usize) -> Vec<Point> {
    let all: Vec<Point> = d
        .trajectories
        .iter()
        .flat_map(|t| t.points.iter().map(|p| p.location.center))
        .collect();
    let step = (all.len() / n.max(1)).max(1);
    let half = 0.5 / d.granularity as f64;
    all.iter()
        .step_by(step)
        .take(n)
        .map(|p| Point::new((p.x + half).min(1.0), p.y))
        .collect()
}
