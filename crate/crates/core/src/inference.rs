//! Multiplier-bootstrap standard errors and Wald intervals for `ψ̂(θ)`.
//!
//! Replicate `b` draws i.i.d. standard-exponential multipliers from the
//! stream `(seed, b)`, refits the Cox model with those case weights and
//! recomputes the case-weighted estimator for every θ on the grid. Because a
//! replicate depends only on `(seed, b)`, results are independent of thread
//! scheduling and batches `0..B₁` and `B₁..B` concatenate to the full run.

use std::ops::Range;

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::CoxProblem;
use crate::data::Dataset;
use crate::effect::{weighted_mean, FittedWeights, WeightSummary};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::theta::{NamedTheta, ThetaSpec};

/// 97.5% standard-normal quantile used for every Wald interval.
pub const Z_975: f64 = 1.959964;

/// Share of failed replicates above which an estimate is flagged.
pub const MAX_DROP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub label: String,
    pub theta: ThetaSpec,
    pub psi_hat: f64,
    /// Bootstrap standard error; absent when no replicates were requested.
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub dropped: usize,
    pub flagged: bool,
    pub seed: u64,
    pub weights: WeightSummary,
}

impl EffectEstimate {
    pub fn covers(&self, value: f64) -> bool {
        self.ci.is_some_and(|[lo, hi]| lo <= value && value <= hi)
    }
}

/// Standard-exponential multipliers for replicate `replicate`.
pub fn multipliers(seed: u64, replicate: usize, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, replicate as u64);
    (0..n).map(|_| Exp1.sample(&mut rng)).collect()
}

fn replicate(ds: &Dataset, problem: &CoxProblem, thetas: &[NamedTheta], seed: u64, b: usize) -> Option<Vec<f64>> {
    let c = multipliers(seed, b, ds.len());
    let fit = problem.fit(Some(&c)).ok().filter(|f| f.converged())?;
    let cached = FittedWeights::new(ds, &fit).ok()?;
    thetas
        .iter()
        .map(|th| {
            let w = cached.weights(&th.spec).ok()?;
            weighted_mean(ds, &w.weights, Some(&c)).ok()
        })
        .collect()
}

/// Replicate estimates for replicates in `range`, one vector per replicate
/// holding one value per θ; `None` marks a failed refit.
pub fn bootstrap_replicates(
    ds: &Dataset,
    thetas: &[NamedTheta],
    seed: u64,
    range: Range<usize>,
) -> Result<Vec<Option<Vec<f64>>>> {
    let problem = CoxProblem::new(ds)?;
    Ok(range
        .into_par_iter()
        .map(|b| replicate(ds, &problem, thetas, seed, b))
        .collect())
}

/// Sample standard deviation (n − 1 denominator), summed in index order.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / k;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    (ss / (k - 1.0)).sqrt()
}

/// Point estimates for every θ from a single Cox fit, with bootstrap
/// standard errors from `replicates` shared multiplier draws. With
/// `replicates == 0` only point estimates are returned.
pub fn effect_curve(ds: &Dataset, thetas: &[NamedTheta], replicates: usize, seed: u64) -> Result<Vec<EffectEstimate>> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("theta grid is empty".into()));
    }
    if replicates == 1 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    for th in thetas {
        th.spec.check_dim(ds.dim())?;
    }
    let problem = CoxProblem::new(ds)?;
    let fit = problem.fit(None)?;
    if !fit.converged() {
        return Err(Error::NotConverged);
    }
    let cached = FittedWeights::new(ds, &fit)?;
    let mut points = Vec::with_capacity(thetas.len());
    for th in thetas {
        let w = cached.weights(&th.spec)?;
        points.push((weighted_mean(ds, &w.weights, None)?, w.summary()));
    }

    let reps: Vec<Option<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| replicate(ds, &problem, thetas, seed, b))
        .collect();
    let kept: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    let dropped = replicates - kept.len();
    if replicates > 0 && kept.len() < 2 {
        return Err(Error::TooFewReplicates { kept: kept.len() });
    }
    let flagged = dropped as f64 > MAX_DROP_FRACTION * replicates as f64;

    Ok(thetas
        .iter()
        .zip(points)
        .enumerate()
        .map(|(j, (th, (psi, weights)))| {
            let se = (replicates > 0).then(|| {
                let col: Vec<f64> = kept.iter().map(|r| r[j]).collect();
                sample_sd(&col)
            });
            EffectEstimate {
                label: th.label.clone(),
                theta: th.spec.clone(),
                psi_hat: psi,
                se,
                ci: se.map(|s| [psi - Z_975 * s, psi + Z_975 * s]),
                replicates,
                dropped,
                flagged,
                seed,
                weights,
            }
        })
        .collect())
}

/// Bootstrap inference for a single θ.
pub fn multiplier_bootstrap(ds: &Dataset, spec: &ThetaSpec, replicates: usize, seed: u64) -> Result<EffectEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replicates".into()));
    }
    let mut out = effect_curve(ds, &[NamedTheta::from(spec.clone())], replicates, seed)?;
    Ok(out.remove(0))
}
