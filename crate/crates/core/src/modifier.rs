//! Trajectory modification: make the data match perturbed frequencies with
//! greedy minimum-loss edits, and the end-to-end anonymization pipeline.
//!
//! Intra-trajectory modification fixes the PF of each point-list entry by
//! inserting the point into its nearest segments or deleting its cheapest
//! occurrences. Inter-trajectory modification fixes the TF of each
//! candidate point by inserting it once into the nearest trajectories that
//! lack it, or by removing it completely from the trajectories where that is
//! cheapest. Every edit is applied immediately and the search index updated
//! before the next decision.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{GlOrder, RunConfig};
use crate::dp::{self, LaplaceSampler, Mode, PerturbedPf, PerturbedTf, PrivacyBudget};
use crate::edit::{self, apply, plan_delete, plan_insert, UtilityLoss};
use crate::geo::{index_segments, Dataset, Location, Segment, Trajectory};
use crate::index::{NearestTrajectories, Neighbor, SearchResult, SearchStats, SpatialIndex, Strategy, TopKWhere};
use crate::signature::{self, compute_pf, select_point_list};
use crate::Result;

/// One greedy decision, reported to an observer before it is applied.
#[derive(Debug)]
pub enum Step<'a> {
    /// `chosen` are the host segments for this batch of insertions of
    /// `target`, nearest first; `requested` is the number of insertions
    /// still outstanding.
    IntraInsert {
        trajectory: &'a Trajectory,
        target: Location,
        requested: usize,
        chosen: &'a [Neighbor],
    },
    /// The occurrence of `target` at `position` is about to be deleted.
    IntraDelete {
        trajectory: &'a Trajectory,
        target: Location,
        position: usize,
        loss: f64,
    },
    /// One neighbour per receiving trajectory, nearest first.
    InterInsert {
        dataset: &'a Dataset,
        target: Location,
        requested: usize,
        chosen: &'a [Neighbor],
    },
    /// `(trajectory, complete deletion loss)` of the trajectories losing
    /// every occurrence of `target`, cheapest first.
    InterDelete {
        dataset: &'a Dataset,
        target: Location,
        requested: usize,
        chosen: &'a [(u32, f64)],
    },
}

pub type Observer<'o> = Option<&'o mut dyn FnMut(Step<'_>)>;

fn notify(observer: &mut Observer<'_>, step: Step<'_>) {
    if let Some(f) = observer.as_mut() {
        f(step);
    }
}

/// A perturbed frequency the edits could not reach.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClampRecord {
    /// Set for PF (per-trajectory) clamps, absent for TF clamps.
    pub trajectory: Option<u32>,
    pub cell: (u32, u32),
    pub requested: usize,
    pub achieved: usize,
    pub reason: &'static str,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModifyStats {
    /// Number of nearest-neighbour searches issued.
    pub searches: usize,
    pub search: SearchStats,
}

impl ModifyStats {
    fn merge(&mut self, other: &ModifyStats) {
        self.searches += other.searches;
        self.search += other.search;
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModifyOutcome {
    pub loss: UtilityLoss,
    pub clamps: Vec<ClampRecord>,
    pub stats: ModifyStats,
}

/// Edits `traj` until every entry of `target` has its perturbed frequency.
///
/// Entries are processed in point-list order. Insertions of one point go
/// into the nearest segments returned by a single K-nearest search with
/// `K = Δ` (repeated if the trajectory had fewer than `Δ` eligible
/// segments); see [`insertion_hosts`].
/// Deletions remove the cheapest occurrence one at a time. A trajectory is
/// never reduced below one point; the shortfall is recorded as a clamp.
pub fn intra_modify(
    traj: &mut Trajectory,
    target: &PerturbedPf,
    strategy: Strategy,
    finest: u32,
    observer: &mut Observer<'_>,
) -> Result<ModifyOutcome> {
    let mut out = ModifyOutcome::default();
    let mut index = SpatialIndex::build(strategy, finest, index_segments(traj));
    for entry in &target.entries {
        let q = entry.location;
        let current = traj.count(&q);
        if entry.perturbed > current {
            let mut remaining = entry.perturbed - current;
            while remaining > 0 {
                let found = insertion_hosts(&index, &q, remaining);
                out.stats.searches += 1;
                out.stats.search += found.stats;
                if found.neighbors.is_empty() {
                    break;
                }
                notify(
                    observer,
                    Step::IntraInsert {
                        trajectory: traj,
                        target: q,
                        requested: remaining,
                        chosen: &found.neighbors,
                    },
                );
                for n in &found.neighbors {
                    let op = plan_insert(traj, &n.segment, q);
                    let diff = apply(&op, traj)?;
                    index.update_after_edit(&diff.removed, &diff.added)?;
                    out.loss.record(&op);
                }
                remaining -= found.neighbors.len();
            }
        } else if entry.perturbed < current {
            for _ in 0..current - entry.perturbed {
                if traj.len() == 1 {
                    out.clamps.push(ClampRecord {
                        trajectory: Some(traj.id),
                        cell: q.key(),
                        requested: entry.perturbed,
                        achieved: traj.count(&q),
                        reason: "trajectory cannot become empty",
                    });
                    break;
                }
                let (position, loss) = cheapest_occurrence(traj, &q).expect("occurrence counted above");
                notify(
                    observer,
                    Step::IntraDelete {
                        trajectory: traj,
                        target: q,
                        position,
                        loss,
                    },
                );
                let op = plan_delete(traj, position);
                let diff = apply(&op, traj)?;
                index.update_after_edit(&diff.removed, &diff.added)?;
                out.loss.record(&op);
            }
        }
    }
    Ok(out)
}

/// Host segments for the next batch of insertions of `q`: the `k` nearest
/// segments that do not already end at `q`. Splicing `q` next to one of its
/// own occurrences would cost nothing but only stutter the point in place,
/// so such segments are used only when no other segment is left.
pub fn insertion_hosts(index: &SpatialIndex, q: &Location, k: usize) -> SearchResult {
    let c = q.center;
    let mut collector = TopKWhere::new(k, |s: &Segment| s.a != c && s.b != c);
    let stats = index.search(c, &mut collector);
    let neighbors = collector.into_sorted();
    if neighbors.is_empty() {
        let mut fallback = index.knn(c, k);
        fallback.stats += stats;
        return fallback;
    }
    SearchResult { neighbors, stats }
}

/// Occurrence of `q` with the smallest deletion loss, earliest on ties.
pub fn cheapest_occurrence(traj: &Trajectory, q: &Location) -> Option<(usize, f64)> {
    traj.points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.location == *q)
        .map(|(i, _)| (i, edit::deletion_loss(traj, i)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Edits the dataset until every candidate point has its perturbed TF.
///
/// All TF decreases are handled first, then all increases, each in
/// ascending location order. Decreases remove the point completely from the
/// trajectories with the smallest complete-deletion loss (never emptying a
/// trajectory); increases insert it once into the trajectories lacking it
/// whose nearest segment is closest. Unreachable targets are clamped and
/// recorded.
pub fn inter_modify(
    dataset: &mut Dataset,
    target: &PerturbedTf,
    strategy: Strategy,
    observer: &mut Observer<'_>,
) -> Result<ModifyOutcome> {
    let mut out = ModifyOutcome {
        loss: UtilityLoss::new(dataset.len()),
        ..ModifyOutcome::default()
    };
    let mut holders: BTreeMap<Location, BTreeSet<u32>> = target.counts.keys().map(|l| (*l, BTreeSet::new())).collect();
    for t in &dataset.trajectories {
        for loc in t.locations() {
            if let Some(h) = holders.get_mut(&loc) {
                h.insert(t.id);
            }
        }
    }
    let mut index = SpatialIndex::build(
        strategy,
        dataset.granularity,
        dataset.trajectories.iter().flat_map(index_segments),
    );

    // Decreases.
    for (&q, &wanted) in &target.counts {
        let have = holders[&q].len();
        if wanted >= have {
            continue;
        }
        let mut candidates: Vec<(u32, f64)> = holders[&q]
            .iter()
            .map(|&t| &dataset.trajectories[t as usize])
            .filter(|t| t.points.iter().any(|p| p.location != q))
            .map(|t| (t.id, edit::complete_deletion_loss(&q, t).expect("holder contains q")))
            .collect();
        candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let need = have - wanted;
        if candidates.len() < need {
            out.clamps.push(ClampRecord {
                trajectory: None,
                cell: q.key(),
                requested: wanted,
                achieved: have - candidates.len(),
                reason: "only trajectories consisting solely of the point remain",
            });
        }
        candidates.truncate(need);
        notify(
            observer,
            Step::InterDelete {
                dataset,
                target: q,
                requested: need,
                chosen: &candidates,
            },
        );
        for &(t, _) in &candidates {
            let traj = &mut dataset.trajectories[t as usize];
            while let Some(pos) = traj.points.iter().position(|p| p.location == q) {
                let op = plan_delete(traj, pos);
                let diff = apply(&op, traj)?;
                index.update_after_edit(&diff.removed, &diff.added)?;
                out.loss.record(&op);
            }
            holders.get_mut(&q).expect("tracked").remove(&t);
        }
    }

    // Increases.
    for (&q, &wanted) in &target.counts {
        let have = holders[&q].len();
        if wanted <= have {
            continue;
        }
        let need = wanted - have;
        let holding = &holders[&q];
        let mut collector = NearestTrajectories::new(need, |t| !holding.contains(&t));
        out.stats.search += index.search(q.center, &mut collector);
        out.stats.searches += 1;
        let chosen = collector.into_sorted();
        if chosen.len() < need {
            out.clamps.push(ClampRecord {
                trajectory: None,
                cell: q.key(),
                requested: wanted,
                achieved: have + chosen.len(),
                reason: "not enough trajectories lack the point",
            });
        }
        notify(
            observer,
            Step::InterInsert {
                dataset,
                target: q,
                requested: need,
                chosen: &chosen,
            },
        );
        for n in &chosen {
            let t = n.segment.id.trajectory;
            let traj = &mut dataset.trajectories[t as usize];
            let op = plan_insert(traj, &n.segment, q);
            let diff = apply(&op, traj)?;
            index.update_after_edit(&diff.removed, &diff.added)?;
            out.loss.record(&op);
            holders.get_mut(&q).expect("tracked").insert(t);
        }
    }
    Ok(out)
}

/// Summary of one mechanism stage (global or local).
#[derive(Debug, Clone, Default, Serialize)]
pub struct PhaseReport {
    pub eps: f64,
    /// Perturbed frequencies: candidate points (global) or point-list
    /// entries (local).
    pub perturbed_values: usize,
    pub increased: usize,
    pub decreased: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub utility_loss: f64,
    pub searches: usize,
    pub segments_checked: usize,
    pub clamps: Vec<ClampRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub gl_order: GlOrder,
    pub seed: u64,
    pub m: usize,
    pub granularity: u32,
    pub strategy: Strategy,
    pub budget: PrivacyBudget,
    pub trajectories: usize,
    pub points_before: usize,
    pub points_after: usize,
    pub global: Option<PhaseReport>,
    pub local: Option<PhaseReport>,
    pub inter_edits: usize,
    pub intra_edits: usize,
    pub total_utility_loss: f64,
    /// Wall time per phase in seconds; only filled when requested, since it
    /// makes reports non-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

/// Everything a run produces besides the anonymized dataset, including the
/// intermediate noisy targets (useful for verification).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dataset: Dataset,
    pub report: RunReport,
    pub tf_target: Option<PerturbedTf>,
    pub pf_targets: Vec<PerturbedPf>,
    pub loss: UtilityLoss,
}

/// Generator stream layout: the global stage draws from stream 0 and
/// trajectory `i` in the local stage from stream `i + 1`, all under the
/// run seed.
pub fn global_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trajectory_rng(seed: u64, trajectory: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64 + 1);
    rng
}

/// Global stage: perturb the TF of the current candidate set, then run
/// inter-trajectory modification.
pub fn global_stage(
    dataset: &mut Dataset,
    config: &RunConfig,
    eps: f64,
    observer: &mut Observer<'_>,
) -> Result<(PerturbedTf, ModifyOutcome, PhaseReport)> {
    let tf = signature::compute_tf(dataset);
    let (_, candidates) = signature::extract_signatures_with(dataset, &tf, config.m);
    let mut rng = global_rng(config.seed);
    let target = dp::perturb_tf(&tf, &candidates, eps, dataset.len(), &mut LaplaceSampler::new(&mut rng))?;
    let outcome = inter_modify(dataset, &target, config.strategy, observer)?;
    let report = PhaseReport {
        eps,
        perturbed_values: target.counts.len(),
        increased: target.counts.iter().filter(|(l, &v)| v > tf.get(l)).count(),
        decreased: target.counts.iter().filter(|(l, &v)| v < tf.get(l)).count(),
        insertions: outcome.loss.insertions,
        deletions: outcome.loss.deletions,
        utility_loss: outcome.loss.total,
        searches: outcome.stats.searches,
        segments_checked: outcome.stats.search.segments_checked,
        clamps: outcome.clamps.clone(),
    };
    Ok((target, outcome, report))
}

/// Local stage: per trajectory, build the point list, perturb its PFs in two
/// stages and run intra-trajectory modification.
pub fn local_stage(
    dataset: &mut Dataset,
    config: &RunConfig,
    eps: f64,
    observer: &mut Observer<'_>,
) -> Result<(Vec<PerturbedPf>, ModifyOutcome, PhaseReport)> {
    let (signatures, candidates) = signature::extract_signatures(dataset, config.m);
    let mut targets = Vec::with_capacity(dataset.len());
    let mut total = ModifyOutcome {
        loss: UtilityLoss::new(dataset.len()),
        ..ModifyOutcome::default()
    };
    let mut report = PhaseReport {
        eps,
        ..PhaseReport::default()
    };
    let granularity = dataset.granularity;
    for (i, traj) in dataset.trajectories.iter_mut().enumerate() {
        let mut rng = trajectory_rng(config.seed, traj.id);
        let list = select_point_list(traj.id, &signatures.ranked[i], &candidates, config.m, &mut rng);
        let pf = compute_pf(traj);
        let target = dp::perturb_pf(&list, &pf, config.m, eps, &mut LaplaceSampler::new(&mut rng))?;
        report.perturbed_values += target.entries.len();
        report.increased += target.entries.iter().filter(|e| e.perturbed > e.original).count();
        report.decreased += target.entries.iter().filter(|e| e.perturbed < e.original).count();
        let outcome = intra_modify(traj, &target, config.strategy, granularity, observer)?;
        total.loss.merge(&outcome.loss);
        total.clamps.extend(outcome.clamps);
        total.stats.merge(&outcome.stats);
        targets.push(target);
    }
    report.insertions = total.loss.insertions;
    report.deletions = total.loss.deletions;
    report.utility_loss = total.loss.total;
    report.searches = total.stats.searches;
    report.segments_checked = total.stats.search.segments_checked;
    report.clamps = total.clamps.clone();
    Ok((targets, total, report))
}

/// Runs the configured mode on a copy of `dataset`.
///
/// In GL mode the two stages run one after the other, each perturbing the
/// frequencies of the dataset as left by the previous stage; budgets add up
/// by sequential composition.
pub fn run_pipeline(dataset: &Dataset, config: &RunConfig) -> Result<RunOutput> {
    run_pipeline_observed(dataset, config, &mut None)
}

pub fn run_pipeline_observed(dataset: &Dataset, config: &RunConfig, observer: &mut Observer<'_>) -> Result<RunOutput> {
    config.validate()?;
    let budget = config.budget()?;
    let mut data = dataset.clone();
    data.granularity = config.granularity;
    let points_before = data.total_points();
    let mut timings = BTreeMap::new();
    let mut loss = UtilityLoss::new(data.len());
    let mut global = None;
    let mut local = None;
    let mut tf_target = None;
    let mut pf_targets = Vec::new();
    let (mut inter_edits, mut intra_edits) = (0, 0);

    let order: &[Mode] = match (config.mode, config.gl_order) {
        (Mode::PureG, _) => &[Mode::PureG],
        (Mode::PureL, _) => &[Mode::PureL],
        (Mode::GL, GlOrder::GlobalFirst) => &[Mode::PureG, Mode::PureL],
        (Mode::GL, GlOrder::LocalFirst) => &[Mode::PureL, Mode::PureG],
    };
    for stage in order {
        let started = Instant::now();
        match stage {
            Mode::PureG => {
                let (t, outcome, rep) = global_stage(&mut data, config, budget.eps_global, observer)?;
                inter_edits += outcome.loss.edits();
                loss.merge(&outcome.loss);
                tf_target = Some(t);
                global = Some(rep);
                timings.insert("global".to_string(), started.elapsed().as_secs_f64());
            }
            _ => {
                let (t, outcome, rep) = local_stage(&mut data, config, budget.eps_local, observer)?;
                intra_edits += outcome.loss.edits();
                loss.merge(&outcome.loss);
                pf_targets = t;
                local = Some(rep);
                timings.insert("local".to_string(), started.elapsed().as_secs_f64());
            }
        }
    }

    let report = RunReport {
        mode: config.mode,
        gl_order: config.gl_order,
        seed: config.seed,
        m: config.m,
        granularity: config.granularity,
        strategy: config.strategy,
        budget,
        trajectories: data.len(),
        points_before,
        points_after: data.total_points(),
        global,
        local,
        inter_edits,
        intra_edits,
        total_utility_loss: loss.total,
        timings: config.report_timings.then_some(timings),
    };
    Ok(RunOutput {
        dataset: data,
        report,
        tf_target,
        pf_targets,
        loss,
    })
}
