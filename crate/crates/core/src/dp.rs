//! Laplace noise, the global TF and local PF perturbation mechanisms, and
//! privacy budget accounting.
//!
//! Both mechanisms have unit sensitivity, so every noise draw uses scale
//! `1/ε`. Rounding and clamping are post-processing applied to the noisy
//! value, never to the input.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geo::Location;
use crate::signature::{CandidateSet, PfDistribution, PointList, TfDistribution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    pub mu: f64,
    pub lambda: f64,
}

impl LaplaceParams {
    /// Unit-sensitivity mechanism at budget `eps` centred on `mu`.
    pub fn for_budget(mu: f64, eps: f64) -> Self {
        Self { mu, lambda: 1.0 / eps }
    }
}

/// Inverse CDF of `Lap(mu, lambda)` at `u ∈ (0, 1)`.
pub fn laplace_quantile(params: LaplaceParams, u: f64) -> f64 {
    let d = u - 0.5;
    params.mu - params.lambda * d.signum() * (1.0 - 2.0 * d.abs()).ln()
}

/// Anything that can hand out Laplace draws. The production source is
/// [`LaplaceSampler`]; tests substitute scripted noise.
pub trait NoiseSource {
    fn laplace(&mut self, params: LaplaceParams) -> f64;
}

/// Inverse-CDF Laplace sampler over any uniform generator.
pub struct LaplaceSampler<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> LaplaceSampler<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng }
    }
}

/// One uniform draw from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn sample_laplace<R: Rng + ?Sized>(params: LaplaceParams, rng: &mut R) -> f64 {
    debug_assert!(params.lambda > 0.0);
    laplace_quantile(params, open_unit(rng))
}

impl<R: Rng + ?Sized> NoiseSource for LaplaceSampler<'_, R> {
    fn laplace(&mut self, params: LaplaceParams) -> f64 {
        sample_laplace(params, self.rng)
    }
}

/// Integer rounding used for noisy counts: nearest, halves away from zero.
#[inline]
pub fn round_count(v: f64) -> i64 {
    v.round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "pureG")]
    PureG,
    #[serde(rename = "pureL")]
    PureL,
    #[serde(rename = "GL")]
    GL,
}

impl Mode {
    pub fn uses_global(self) -> bool {
        matches!(self, Mode::PureG | Mode::GL)
    }

    pub fn uses_local(self) -> bool {
        matches!(self, Mode::PureL | Mode::GL)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pureG" | "PureG" | "pureg" => Ok(Mode::PureG),
            "pureL" | "PureL" | "purel" => Ok(Mode::PureL),
            "GL" | "gl" => Ok(Mode::GL),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Budget actually spent by a run. Sequential composition: the total is the
/// sum of the component budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub eps_global: f64,
    pub eps_local: f64,
    pub total: f64,
}

impl PrivacyBudget {
    pub fn new(eps_global: f64, eps_local: f64) -> Self {
        Self {
            eps_global,
            eps_local,
            total: eps_global + eps_local,
        }
    }

    pub fn even_split(total: f64) -> Self {
        Self::new(total / 2.0, total / 2.0)
    }
}

/// Budget spent by `mode` given the configured component budgets. Unused
/// components are reported as zero.
pub fn budget_report(mode: Mode, eps_global: f64, eps_local: f64) -> Result<PrivacyBudget> {
    let check = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Config(format!(
                "{name} must be a positive finite number, got {v}"
            )))
        }
    };
    Ok(match mode {
        Mode::PureG => PrivacyBudget::new(check("eps_global", eps_global)?, 0.0),
        Mode::PureL => PrivacyBudget::new(0.0, check("eps_local", eps_local)?),
        Mode::GL => PrivacyBudget::new(check("eps_global", eps_global)?, check("eps_local", eps_local)?),
    })
}

fn check_eps(eps: f64, what: &str) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {eps}")))
    }
}

/// Noisy trajectory frequencies over the candidate set, integers in
/// `[0, |D|]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PerturbedTf {
    pub counts: BTreeMap<Location, usize>,
}

/// Global TF randomization: one independent `Lap(1/ε_G)` draw per candidate
/// point, in ascending location order, rounded and clamped to `[0, |D|]`.
pub fn perturb_tf<N: NoiseSource + ?Sized>(
    tf: &TfDistribution,
    candidates: &CandidateSet,
    eps_global: f64,
    dataset_size: usize,
    noise: &mut N,
) -> Result<PerturbedTf> {
    check_eps(eps_global, "eps_global")?;
    let params = LaplaceParams::for_budget(0.0, eps_global);
    let counts = candidates
        .points
        .iter()
        .map(|&loc| {
            let l = tf.get(&loc) as f64;
            let noisy = round_count(l + noise.laplace(params));
            (loc, noisy.clamp(0, dataset_size as i64) as usize)
        })
        .collect();
    Ok(PerturbedTf { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PfEntry {
    pub location: Location,
    pub original: usize,
    pub perturbed: usize,
}

/// Perturbed frequencies of one trajectory's point list, aligned with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedPf {
    pub trajectory_id: u32,
    pub entries: Vec<PfEntry>,
}

impl PerturbedPf {
    pub fn net_change(&self) -> i64 {
        self.entries
            .iter()
            .map(|e| e.perturbed as i64 - e.original as i64)
            .sum()
    }
}

/// Two-stage local PF randomization.
///
/// Stage-1 covers the first `min(m, len)` list entries and draws
/// `Lap(−f, 1/ε_L)`, which pulls each signature frequency toward zero.
/// Stage-2 covers the remaining entries and draws `Lap(−μ̄, 1/ε_L)` where
/// `μ̄` is the mean change actually applied in Stage-1, so the trajectory
/// roughly keeps its length.
pub fn perturb_pf<N: NoiseSource + ?Sized>(
    list: &PointList,
    pf: &PfDistribution,
    m: usize,
    eps_local: f64,
    noise: &mut N,
) -> Result<PerturbedPf> {
    check_eps(eps_local, "eps_local")?;
    let stage1 = m.min(list.points.len());
    let mut entries = Vec::with_capacity(list.points.len());
    let mut applied = 0i64;
    for &location in &list.points[..stage1] {
        let f = pf.get(&location);
        let eta = noise.laplace(LaplaceParams::for_budget(-(f as f64), eps_local));
        let perturbed = round_count(f as f64 + eta).max(0) as usize;
        applied += perturbed as i64 - f as i64;
        entries.push(PfEntry {
            location,
            original: f,
            perturbed,
        });
    }
    let mean_applied = if stage1 > 0 {
        applied as f64 / stage1 as f64
    } else {
        0.0
    };
    let stage2 = LaplaceParams::for_budget(-mean_applied, eps_local);
    for &location in &list.points[stage1..] {
        let f = pf.get(&location);
        let eta = noise.laplace(stage2);
        let perturbed = round_count(f as f64 + eta).max(0) as usize;
        entries.push(PfEntry {
            location,
            original: f,
            perturbed,
        });
    }
    Ok(PerturbedPf {
        trajectory_id: list.trajectory_id,
        entries,
    })
}
