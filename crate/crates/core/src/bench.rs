//! Efficiency harness: the full modification workload under each search
//! strategy, cross-checked for identical output before timings are reported.

use std::time::Instant;

use serde::Serialize;

use crate::config::RunConfig;
use crate::dp::Mode;
use crate::geo::Dataset;
use crate::index::Strategy;
use crate::modifier::run_pipeline;
use crate::synth::{self, SynthConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub trajectories: usize,
    pub points: usize,
    pub strategy: Strategy,
    /// Seconds spent in the modification phases.
    pub seconds: f64,
    pub searches: usize,
    pub segments_checked: usize,
}

/// Runs `config` once per strategy on `dataset`. Fails if two strategies
/// produce different anonymized datasets.
pub fn compare_strategies(dataset: &Dataset, config: &RunConfig, strategies: &[Strategy]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(strategies.len());
    let mut reference: Option<(Strategy, Dataset)> = None;
    for &strategy in strategies {
        let cfg = RunConfig {
            strategy,
            report_timings: true,
            ..config.clone()
        };
        let started = Instant::now();
        let out = run_pipeline(dataset, &cfg)?;
        let wall = started.elapsed().as_secs_f64();
        let report = &out.report;
        let seconds = report.timings.as_ref().map(|t| t.values().sum()).unwrap_or(wall);
        let phases = [&report.global, &report.local];
        rows.push(BenchRow {
            trajectories: dataset.len(),
            points: dataset.total_points(),
            strategy,
            seconds,
            searches: phases.iter().filter_map(|p| p.as_ref()).map(|p| p.searches).sum(),
            segments_checked: phases
                .iter()
                .filter_map(|p| p.as_ref())
                .map(|p| p.segments_checked)
                .sum(),
        });
        match &reference {
            None => reference = Some((strategy, out.dataset)),
            Some((first, d)) if *d != out.dataset => {
                return Err(Error::Config(format!(
                    "strategies {first} and {strategy} produced different outputs"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(rows)
}

/// Benchmarks every size on a synthetic corpus with average length
/// `avg_len`, GL mode at ε = 1.
pub fn run(sizes: &[usize], avg_len: usize, strategies: &[Strategy], seed: u64) -> Result<Vec<BenchRow>> {
    let config = RunConfig::new(Mode::GL, 1.0, seed);
    let mut rows = Vec::new();
    for &n in sizes {
        let data = synth::dataset(&SynthConfig::new(n, avg_len, seed));
        rows.extend(compare_strategies(&data, &config, strategies)?);
    }
    Ok(rows)
}

/// Plain-text table of the rows.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:>6} {:>9} {:>8} {:>10} {:>9} {:>15}\n",
        "n", "points", "strategy", "seconds", "searches", "segs checked"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>6} {:>9} {:>8} {:>10.3} {:>9} {:>15}\n",
            r.trajectories,
            r.points,
            r.strategy.name(),
            r.seconds,
            r.searches,
            r.segments_checked
        ));
    }
    s
}
