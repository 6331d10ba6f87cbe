use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, Dgp};
use super::oracle::oracle_psi;
use crate::error::{Error, Result};
use crate::inference::{effect_curve, sample_sd, EffectEstimate};
use crate::rng::derive_seed;
use crate::theta::{NamedTheta, ThetaSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: Dgp,
    pub n: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    #[serde(rename = "B")]
    pub bootstrap: usize,
    pub seed: u64,
    /// Defaults to the design's standard grid.
    #[serde(default)]
    pub thetas: Option<Vec<NamedTheta>>,
}

/// Monte-Carlo metrics for one θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub theta: ThetaSpec,
    pub true_psi: f64,
    pub mean_psi: f64,
    pub bias: f64,
    pub pct_bias: f64,
    /// Empirical standard deviation of the estimates.
    pub see: f64,
    /// Mean bootstrap standard error.
    pub sd: f64,
    /// Fraction of Wald intervals covering the true value.
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub dgp: Dgp,
    pub n: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    #[serde(rename = "B")]
    pub bootstrap: usize,
    pub seed: u64,
    /// Replications whose estimation failed and were excluded.
    pub failed: usize,
    /// Replications with more than the tolerated share of dropped replicates.
    pub flagged: usize,
    pub rows: Vec<StudyRow>,
}

impl StudyReport {
    pub fn row(&self, label: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Runs `R` independent replications of generate → fit → estimate →
/// bootstrap. Replication `r` draws its data from `derive_seed(seed, 2r)` and
/// its multipliers from `derive_seed(seed, 2r + 1)`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.replications < 2 {
        return Err(Error::InvalidArgument("a study needs at least 2 replications".into()));
    }
    if cfg.bootstrap < 2 {
        return Err(Error::InvalidArgument("a study needs at least 2 bootstrap replicates".into()));
    }
    if cfg.n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let thetas = cfg.thetas.clone().unwrap_or_else(|| cfg.dgp.default_grid());
    let truth = thetas
        .iter()
        .map(|th| oracle_psi(cfg.dgp, &th.spec))
        .collect::<Result<Vec<_>>>()?;

    let runs: Vec<Option<Vec<EffectEstimate>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let ds = generate(cfg.dgp, cfg.n, derive_seed(cfg.seed, 2 * r));
            effect_curve(&ds, &thetas, cfg.bootstrap, derive_seed(cfg.seed, 2 * r + 1)).ok()
        })
        .collect();
    let ok: Vec<&Vec<EffectEstimate>> = runs.iter().flatten().collect();
    let failed = runs.len() - ok.len();
    if ok.len() < 2 {
        return Err(Error::InvalidArgument(format!("only {} replications succeeded", ok.len())));
    }
    let flagged = ok.iter().filter(|run| run.iter().any(|e| e.flagged)).count();
    let k = ok.len() as f64;

    let rows = thetas
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(j, (th, &true_psi))| {
            let psi: Vec<f64> = ok.iter().map(|run| run[j].psi_hat).collect();
            let mut sum = 0.0;
            let mut se_sum = 0.0;
            let mut covered = 0usize;
            for run in &ok {
                sum += run[j].psi_hat;
                se_sum += run[j].se.unwrap_or(0.0);
                covered += usize::from(run[j].covers(true_psi));
            }
            let mean_psi = sum / k;
            let bias = mean_psi - true_psi;
            StudyRow {
                label: th.label.clone(),
                theta: th.spec.clone(),
                true_psi,
                mean_psi,
                bias,
                pct_bias: 100.0 * bias / true_psi,
                see: sample_sd(&psi),
                sd: se_sum / k,
                cp: covered as f64 / k,
            }
        })
        .collect();

    Ok(StudyReport {
        dgp: cfg.dgp,
        n: cfg.n,
        replications: cfg.replications,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        failed,
        flagged,
        rows,
    })
}
