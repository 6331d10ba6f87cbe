//! Cox proportional-hazards model for the treatment-initiation time.
//!
//! The (case-weighted) Breslow partial log-likelihood
//!
//! ```text
//! ℓ(β) = Σᵢ wᵢ δᵢ [βᵀxᵢ − log Σ_{j∈R(tᵢ)} wⱼ exp(βᵀxⱼ)]
//! ```
//!
//! is maximized by Newton–Raphson with step halving, on internally centered
//! covariates. The Breslow baseline increments are
//! `ΔΛ₀(t_k) = Σ wᵢ dᵢ(t_k) / Σ_{j∈R(t_k)} wⱼ exp(βᵀlⱼ)` on the original
//! covariate scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MAX_ITER: usize = 50;
pub const REL_LOGLIK_TOL: f64 = 1e-9;
/// Max-norm score threshold per unit of mean case weight.
pub const SCORE_TOL: f64 = 1e-8;
pub const MAX_CONDITION: f64 = 1e10;
/// Coefficients beyond this magnitude indicate a monotone likelihood.
pub const MONOTONE_BETA: f64 = 15.0;

/// Fitted coefficients plus the Breslow baseline cumulative hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CoxFitWire", try_from = "CoxFitWire")]
pub struct CoxFit {
    beta: Vec<f64>,
    baseline_times: Vec<f64>,
    baseline_increments: Vec<f64>,
    cumulative: Vec<f64>,
    loglik: f64,
    n_iter: usize,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct CoxFitWire {
    beta: Vec<f64>,
    baseline: Vec<[f64; 2]>,
    loglik: f64,
    converged: bool,
    n_iter: usize,
}

impl From<CoxFit> for CoxFitWire {
    fn from(fit: CoxFit) -> Self {
        Self {
            baseline: fit
                .baseline_times
                .iter()
                .zip(&fit.baseline_increments)
                .map(|(&t, &d)| [t, d])
                .collect(),
            beta: fit.beta,
            loglik: fit.loglik,
            converged: fit.converged,
            n_iter: fit.n_iter,
        }
    }
}

impl TryFrom<CoxFitWire> for CoxFit {
    type Error = String;

    fn try_from(w: CoxFitWire) -> std::result::Result<Self, String> {
        let (times, incs): (Vec<f64>, Vec<f64>) = w.baseline.iter().map(|p| (p[0], p[1])).unzip();
        CoxFit::from_parts(w.beta, times, incs, w.loglik, w.n_iter, w.converged).map_err(|e| e.to_string())
    }
}

impl CoxFit {
    /// Assembles a fit from its parts, checking the baseline invariants.
    pub fn from_parts(
        beta: Vec<f64>,
        baseline_times: Vec<f64>,
        baseline_increments: Vec<f64>,
        loglik: f64,
        n_iter: usize,
        converged: bool,
    ) -> Result<Self> {
        if baseline_times.len() != baseline_increments.len() {
            return Err(Error::DimensionMismatch {
                expected: baseline_times.len(),
                got: baseline_increments.len(),
            });
        }
        if baseline_times.windows(2).any(|w| w[0] >= w[1]) || baseline_times.iter().any(|&t| t.is_nan() || t < 0.0) {
            return Err(Error::InvalidArgument("baseline times must be strictly increasing and nonnegative".into()));
        }
        if baseline_increments.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument("baseline increments must be positive".into()));
        }
        let mut acc = 0.0;
        let cumulative = baseline_increments
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        Ok(Self {
            beta,
            baseline_times,
            baseline_increments,
            cumulative,
            loglik,
            n_iter,
            converged,
        })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn baseline_times(&self) -> &[f64] {
        &self.baseline_times
    }

    pub fn baseline_increments(&self) -> &[f64] {
        &self.baseline_increments
    }

    /// Running sums of the baseline increments, aligned with `baseline_times`.
    pub fn cumulative_baseline(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Number of baseline jumps at times `≤ t`.
    pub fn jumps_through(&self, t: f64) -> usize {
        self.baseline_times.partition_point(|&s| s <= t)
    }

    /// Number of baseline jumps at times `< t`.
    pub fn jumps_before(&self, t: f64) -> usize {
        self.baseline_times.partition_point(|&s| s < t)
    }

    /// `Λ̂₀` summed over the first `k` jumps.
    pub fn baseline_through(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `Λ̂₀(t)`, right-continuous.
    pub fn baseline_at(&self, t: f64) -> f64 {
        self.baseline_through(self.jumps_through(t))
    }

    /// `exp(βᵀl)`.
    pub fn relative_risk(&self, l: &[f64]) -> Result<f64> {
        if l.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: l.len(),
            });
        }
        Ok(dot(&self.beta, l).exp())
    }
}

/// `Λ̂(t|l) = Λ̂₀(t)·exp(βᵀl)`.
pub fn cumulative_hazard(fit: &CoxFit, t: f64, l: &[f64]) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    Ok(fit.baseline_at(t) * fit.relative_risk(l)?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Partial likelihood and derivatives over a subset of coordinates.
struct Eval {
    loglik: f64,
    score: Vec<f64>,
    /// Observed information (negative Hessian), row-major `k × k`.
    info: Vec<f64>,
}

/// A dataset prepared for repeated (re)weighted fits: sorted by descending
/// time with covariates centered.
#[derive(Debug, Clone)]
pub struct CoxProblem {
    dim: usize,
    order: Vec<usize>,
    time: Vec<f64>,
    event: Vec<bool>,
    x: Vec<f64>,
    means: Vec<f64>,
    active: Vec<usize>,
    /// Runs of equal time in the sorted arrays, latest first.
    groups: Vec<(usize, usize)>,
}

impl CoxProblem {
    pub fn new(ds: &Dataset) -> Result<Self> {
        if ds.n_events() == 0 {
            return Err(Error::NoEvents);
        }
        let n = ds.len();
        let dim = ds.dim();
        let recs = ds.records();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| recs[b].t_obs.total_cmp(&recs[a].t_obs).then(a.cmp(&b)));

        let means: Vec<f64> = (0..dim)
            .map(|j| recs.iter().map(|r| r.covariates[j]).sum::<f64>() / n as f64)
            .collect();
        let mut x = Vec::with_capacity(n * dim);
        for &i in &order {
            x.extend(recs[i].covariates.iter().zip(&means).map(|(v, m)| v - m));
        }

        // Constant columns carry no information; their coefficients stay at 0.
        let active: Vec<usize> = (0..dim)
            .filter(|&j| {
                let ss: f64 = (0..n).map(|i| x[i * dim + j].powi(2)).sum();
                let sd = (ss / n as f64).sqrt();
                sd > 1e-12 * means[j].abs().max(1.0)
            })
            .collect();
        if !active.is_empty() {
            let k = active.len();
            let cov = DMatrix::from_fn(k, k, |a, b| {
                let (ja, jb) = (active[a], active[b]);
                (0..n).map(|i| x[i * dim + ja] * x[i * dim + jb]).sum::<f64>() / n as f64
            });
            let eig = cov.symmetric_eigen().eigenvalues;
            let max = eig.max();
            let min = eig.min();
            let condition = if min > 0.0 { max / min } else { f64::INFINITY };
            if condition > MAX_CONDITION {
                return Err(Error::DegenerateDesign { condition });
            }
        }

        let time: Vec<f64> = order.iter().map(|&i| recs[i].t_obs).collect();
        let event: Vec<bool> = order.iter().map(|&i| recs[i].delta).collect();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && time[end] == time[start] {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }

        Ok(Self {
            dim,
            order,
            time,
            event,
            x,
            means,
            active,
            groups,
        })
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Indices of covariates with nonzero spread.
    pub fn active_columns(&self) -> &[usize] {
        &self.active
    }

    fn sorted_weights(&self, weights: Option<&[f64]>) -> Result<Vec<f64>> {
        match weights {
            None => Ok(vec![1.0; self.n()]),
            Some(w) => {
                if w.len() != self.n() {
                    return Err(Error::DimensionMismatch {
                        expected: self.n(),
                        got: w.len(),
                    });
                }
                if let Some(index) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidWeights { index });
                }
                Ok(self.order.iter().map(|&i| w[i]).collect())
            }
        }
    }

    fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.n()).map(|i| dot(&self.x[i * d..(i + 1) * d], beta)).collect()
    }

    fn evaluate_cols(&self, beta: &[f64], cols: &[usize], w: &[f64]) -> Eval {
        let d = self.dim;
        let k = cols.len();
        let eta = self.linear_predictor(beta);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; k];
        let mut s2 = vec![0.0; k * k];
        let mut out = Eval {
            loglik: 0.0,
            score: vec![0.0; k],
            info: vec![0.0; k * k],
        };
        let mut mean = vec![0.0; k];
        for &(start, end) in &self.groups {
            let mut dsum = 0.0;
            for i in start..end {
                let r = w[i] * eta[i].exp();
                let xi = &self.x[i * d..(i + 1) * d];
                s0 += r;
                for a in 0..k {
                    let xa = xi[cols[a]];
                    s1[a] += r * xa;
                    for b in 0..=a {
                        s2[a * k + b] += r * xa * xi[cols[b]];
                    }
                }
                if self.event[i] {
                    dsum += w[i];
                }
            }
            if dsum == 0.0 {
                continue;
            }
            let log_s0 = s0.ln();
            for a in 0..k {
                mean[a] = s1[a] / s0;
            }
            for i in (start..end).filter(|&i| self.event[i]) {
                out.loglik += w[i] * (eta[i] - log_s0);
                let xi = &self.x[i * d..(i + 1) * d];
                for a in 0..k {
                    out.score[a] += w[i] * (xi[cols[a]] - mean[a]);
                }
            }
            for a in 0..k {
                for b in 0..=a {
                    out.info[a * k + b] += dsum * (s2[a * k + b] / s0 - mean[a] * mean[b]);
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                out.info[b * k + a] = out.info[a * k + b];
            }
        }
        out
    }

    /// Log partial likelihood, gradient and Hessian at `beta` over every
    /// covariate. The value does not depend on the internal centering.
    pub fn evaluate(&self, beta: &[f64], weights: Option<&[f64]>) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        if beta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: beta.len(),
            });
        }
        let w = self.sorted_weights(weights)?;
        let cols: Vec<usize> = (0..self.dim).collect();
        let e = self.evaluate_cols(beta, &cols, &w);
        Ok((e.loglik, e.score, e.info.iter().map(|v| -v).collect()))
    }

    /// Newton step `I⁻¹U`, or `None` when the information is not positive
    /// definite.
    fn newton_step(e: &Eval) -> Option<Vec<f64>> {
        let k = e.score.len();
        let info = DMatrix::from_row_slice(k, k, &e.info);
        let chol = info.cholesky()?;
        let step = chol.solve(&DVector::from_column_slice(&e.score));
        Some(step.iter().copied().collect())
    }

    /// Fits the model, optionally with strictly positive case weights given
    /// in dataset record order.
    pub fn fit(&self, weights: Option<&[f64]>) -> Result<CoxFit> {
        let w = self.sorted_weights(weights)?;
        let cols = &self.active;
        let mut beta = vec![0.0; self.dim];
        let mut cur = self.evaluate_cols(&beta, cols, &w);
        let mut n_iter = 0;
        let mut converged = false;
        let mut polishing = false;
        // The score scales with the case weights; measure it per unit weight.
        let score_tol = SCORE_TOL * w.iter().sum::<f64>() / w.len() as f64;

        while n_iter < MAX_ITER {
            if max_abs(&cur.score) < score_tol {
                converged = true;
                break;
            }
            let Some(mut step) = Self::newton_step(&cur) else {
                break;
            };
            n_iter += 1;
            let mut cand = beta.clone();
            let mut next;
            let mut halvings = 0;
            loop {
                for (a, &j) in cols.iter().enumerate() {
                    cand[j] = beta[j] + step[a];
                }
                next = self.evaluate_cols(&cand, cols, &w);
                let slack = 1e-12 * cur.loglik.abs().max(1.0);
                if next.loglik.is_finite() && next.loglik >= cur.loglik - slack {
                    break;
                }
                halvings += 1;
                if halvings > 30 {
                    break;
                }
                step.iter_mut().for_each(|s| *s *= 0.5);
            }
            if halvings > 30 {
                // No ascent direction left; accept the current point if the
                // likelihood has already settled.
                converged = polishing;
                break;
            }
            let rel = (next.loglik - cur.loglik).abs() / next.loglik.abs().max(f64::MIN_POSITIVE);
            beta = cand;
            cur = next;
            if max_abs(&beta) > MONOTONE_BETA {
                break;
            }
            if polishing {
                converged = true;
                break;
            }
            if rel < REL_LOGLIK_TOL {
                // One more full step drives the score to rounding level.
                polishing = true;
            }
        }
        if max_abs(&beta) > MONOTONE_BETA || (converged && self.still_ascending(&beta, &w, cur.loglik)) {
            converged = false;
        }
        Ok(self.assemble(beta, &w, cur.loglik, n_iter, converged))
    }

    /// Separable samples let Newton stall at a large but finite β where the
    /// score is negligible. Probing far out along the ray through β exposes a
    /// likelihood that is still rising towards its supremum.
    fn still_ascending(&self, beta: &[f64], w: &[f64], loglik: f64) -> bool {
        let norm = max_abs(beta);
        if norm == 0.0 {
            return false;
        }
        let probe: Vec<f64> = beta.iter().map(|b| b + MONOTONE_BETA * b / norm).collect();
        let far = self.evaluate_cols(&probe, &self.active, w).loglik;
        far >= loglik - 1e-12 * loglik.abs().max(1.0)
    }

    fn assemble(&self, beta: Vec<f64>, w: &[f64], loglik: f64, n_iter: usize, converged: bool) -> CoxFit {
        let eta = self.linear_predictor(&beta);
        // Increments are computed on the centered scale, then shifted back:
        // exp(βᵀl)·ΔΛ₀ = exp(βᵀ(l − l̄))·ΔΛ₀ᶜ.
        let shift = (-dot(&beta, &self.means)).exp();
        let mut s0 = 0.0;
        let mut times = Vec::new();
        let mut incs = Vec::new();
        for &(start, end) in &self.groups {
            let mut dsum = 0.0;
            for i in start..end {
                s0 += w[i] * eta[i].exp();
                if self.event[i] {
                    dsum += w[i];
                }
            }
            if dsum > 0.0 {
                times.push(self.time[start]);
                incs.push(dsum / s0 * shift);
            }
        }
        times.reverse();
        incs.reverse();
        let mut acc = 0.0;
        let cumulative = incs
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        CoxFit {
            beta,
            baseline_times: times,
            baseline_increments: incs,
            cumulative,
            loglik,
            n_iter,
            converged,
        }
    }
}

/// Fits the Cox model with optional case weights (dataset record order).
pub fn fit_cox(ds: &Dataset, case_weights: Option<&[f64]>) -> Result<CoxFit> {
    CoxProblem::new(ds)?.fit(case_weights)
}

/// Proportionality test for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhTest {
    pub covariate: String,
    /// Correlation of the scaled residuals with rank time.
    pub rho: Option<f64>,
    pub chisq: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchoenfeldReport {
    /// Event times in ascending order, one per event record.
    pub event_times: Vec<f64>,
    /// Dataset index of the record behind each residual row.
    pub record_index: Vec<usize>,
    /// One row per event, one column per covariate.
    pub residuals: Vec<Vec<f64>>,
    pub tests: Vec<PhTest>,
    pub global_chisq: f64,
    pub global_df: usize,
    pub global_p_value: f64,
}

/// Schoenfeld residuals at `β̂` and the rank-time score test of
/// proportionality. Constant covariates are left out of the tests.
pub fn schoenfeld(ds: &Dataset, fit: &CoxFit) -> Result<SchoenfeldReport> {
    if !fit.converged() {
        return Err(Error::NotConverged);
    }
    if fit.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: fit.dim(),
        });
    }
    let prob = CoxProblem::new(ds)?;
    let d = prob.dim;
    let w = vec![1.0; prob.n()];
    let eta = prob.linear_predictor(fit.beta());

    // Walk risk sets latest-first, collecting residuals for each event.
    let mut rows: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(ds.n_events());
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    for &(start, end) in &prob.groups {
        for i in start..end {
            let r = eta[i].exp();
            s0 += r;
            for j in 0..d {
                s1[j] += r * prob.x[i * d + j];
            }
        }
        for i in (start..end).filter(|&i| prob.event[i]) {
            let resid = (0..d).map(|j| prob.x[i * d + j] - s1[j] / s0).collect();
            rows.push((prob.time[i], prob.order[i], resid));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let m = rows.len();

    let cols = prob.active.clone();
    let k = cols.len();
    let info = DMatrix::from_row_slice(k, k, &prob.evaluate_cols(fit.beta(), &cols, &w).info);
    let var = info
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateDesign { condition: f64::INFINITY })?;

    // Average ranks of event times, centered.
    let mut rank = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && rows[j].0 == rows[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank[i..j].iter_mut().for_each(|r| *r = avg);
        i = j;
    }
    let g_mean = rank.iter().sum::<f64>() / m as f64;
    let g: Vec<f64> = rank.iter().map(|r| r - g_mean).collect();
    let gss: f64 = g.iter().map(|v| v * v).sum();

    // s = Σ g_k r_k over active columns; scaled residuals r* = m·V·r.
    let s = DVector::from_fn(k, |a, _| rows.iter().zip(&g).map(|(row, gk)| gk * row.2[cols[a]]).sum());
    let u = &var * &s * m as f64;
    let scaled: Vec<DVector<f64>> = rows
        .iter()
        .map(|row| &var * DVector::from_fn(k, |a, _| row.2[cols[a]]) * m as f64)
        .collect();

    let mut tests: Vec<PhTest> = ds
        .covariate_names()
        .iter()
        .map(|name| PhTest {
            covariate: name.clone(),
            rho: None,
            chisq: None,
            p_value: None,
        })
        .collect();
    let chi1 = ChiSquared::new(1.0).expect("df > 0");
    for (a, &j) in cols.iter().enumerate() {
        let z = u[a] * u[a] / (var[(a, a)] * m as f64 * gss);
        let col: Vec<f64> = scaled.iter().map(|v| v[a]).collect();
        tests[j].rho = pearson(&g, &col);
        tests[j].chisq = Some(z);
        tests[j].p_value = Some(chi1.sf(z));
    }
    let (global_chisq, global_p_value) = if k > 0 && gss > 0.0 {
        let z = (s.transpose() * &var * &s)[(0, 0)] * m as f64 / gss;
        (z, ChiSquared::new(k as f64).expect("df > 0").sf(z))
    } else {
        (0.0, 1.0)
    };

    let (event_times, record_index, residuals) = rows.into_iter().fold(
        (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m)),
        |(mut t, mut idx, mut r), row| {
            t.push(row.0);
            idx.push(row.1);
            r.push(row.2);
            (t, idx, r)
        },
    );
    Ok(SchoenfeldReport {
        event_times,
        record_index,
        residuals,
        tests,
        global_chisq,
        global_df: k,
        global_p_value,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
