//! Inverse-probability weights for hazard-shift interventions and the
//! plug-in estimator of the incremental effect `ψ(θ)`.
//!
//! For subject `i` the weight is
//!
//! ```text
//! wᵢ = θ(Tᵢ∧τ, Lᵢ)^Δᵢ · exp(−∫₀^{Tᵢ∧τ} (θ(t, Lᵢ) − 1) dΛ(t|Lᵢ))
//! ```
//!
//! and `ψ̂(θ) = n⁻¹ Σ wᵢ Yᵢ`. With a step-function `Λ̂` the integral is an
//! exact sum over jumps at times `≤ Tᵢ∧τ` (the subject's own jump included).
//! No propensity appears in a denominator, so weights stay finite without any
//! positivity condition on the treatment process.

use serde::{Deserialize, Serialize};

use crate::cox::CoxFit;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_split, Tolerance};
use crate::theta::ThetaSpec;

/// A conditional cumulative hazard that can integrate `θ − 1` against itself.
pub trait HazardIntegral {
    /// Covariate dimension.
    fn dim(&self) -> usize;

    /// `∫₀ᵗ (θ(s, l) − 1) dΛ(s|l)`, closed at `t`.
    fn shifted_integral(&self, spec: &ThetaSpec, t: f64, l: &[f64]) -> f64;
}

impl HazardIntegral for CoxFit {
    fn dim(&self) -> usize {
        CoxFit::dim(self)
    }

    fn shifted_integral(&self, spec: &ThetaSpec, t: f64, l: &[f64]) -> f64 {
        let rr = self.relative_risk(l).unwrap_or(f64::NAN);
        let b = spec.covariate_factor(l);
        match spec {
            ThetaSpec::Constant(_) | ThetaSpec::LogLinear(_) => rr * ((b - 1.0) * self.baseline_at(t)),
            ThetaSpec::Piecewise { .. } => {
                let upto = self.jumps_through(t);
                let mut acc = 0.0;
                for (start, end, level) in spec.time_pieces() {
                    let lo = if start.is_finite() { self.jumps_before(start) } else { 0 };
                    let hi = if end.is_finite() { self.jumps_before(end) } else { usize::MAX }.min(upto);
                    if hi > lo {
                        let mass = self.baseline_through(hi) - self.baseline_through(lo);
                        acc += (level * b - 1.0) * mass;
                    }
                }
                rr * acc
            }
        }
    }
}

/// Weights `w₁..wₙ` in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub theta: ThetaSpec,
}

/// Extremes and Kish effective sample size `(Σw)²/Σw²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub ess: f64,
}

impl WeightVector {
    pub fn summary(&self) -> WeightSummary {
        let (mut sum, mut sq) = (0.0, 0.0);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &w in &self.weights {
            sum += w;
            sq += w * w;
            min = min.min(w);
            max = max.max(w);
        }
        WeightSummary {
            min,
            max,
            mean: sum / self.weights.len() as f64,
            ess: sum * sum / sq,
        }
    }
}

/// IPW weights for `spec` under the cumulative hazard `hazard`.
pub fn ipw_weights<H: HazardIntegral>(ds: &Dataset, hazard: &H, spec: &ThetaSpec) -> Result<WeightVector> {
    if hazard.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: hazard.dim(),
        });
    }
    spec.check_dim(ds.dim())?;
    let mut weights = Vec::with_capacity(ds.len());
    for (index, r) in ds.records().iter().enumerate() {
        let integral = hazard.shifted_integral(spec, r.t_obs, &r.covariates);
        let mut w = (-integral).exp();
        if r.delta {
            w *= spec.eval(r.t_obs, &r.covariates);
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::DegenerateWeight { index });
        }
        weights.push(w);
    }
    Ok(WeightVector {
        weights,
        theta: spec.clone(),
    })
}

/// A Cox fit paired with a dataset, caching each subject's `exp(β̂ᵀlᵢ)` and
/// `Λ̂₀(tᵢ)` so that weights for many θ cost one exponential per subject.
/// Results are bitwise identical to [`ipw_weights`].
pub struct FittedWeights<'a> {
    ds: &'a Dataset,
    fit: &'a CoxFit,
    relative_risk: Vec<f64>,
    baseline: Vec<f64>,
}

impl<'a> FittedWeights<'a> {
    pub fn new(ds: &'a Dataset, fit: &'a CoxFit) -> Result<Self> {
        if fit.dim() != ds.dim() {
            return Err(Error::DimensionMismatch {
                expected: ds.dim(),
                got: fit.dim(),
            });
        }
        let relative_risk = ds
            .records()
            .iter()
            .map(|r| fit.relative_risk(&r.covariates))
            .collect::<Result<Vec<_>>>()?;
        let baseline = ds.records().iter().map(|r| fit.baseline_at(r.t_obs)).collect();
        Ok(Self {
            ds,
            fit,
            relative_risk,
            baseline,
        })
    }

    pub fn weights(&self, spec: &ThetaSpec) -> Result<WeightVector> {
        spec.check_dim(self.ds.dim())?;
        let mut weights = Vec::with_capacity(self.ds.len());
        for (index, r) in self.ds.records().iter().enumerate() {
            let integral = match spec {
                ThetaSpec::Constant(_) | ThetaSpec::LogLinear(_) => {
                    let b = spec.covariate_factor(&r.covariates);
                    self.relative_risk[index] * ((b - 1.0) * self.baseline[index])
                }
                ThetaSpec::Piecewise { .. } => self.fit.shifted_integral(spec, r.t_obs, &r.covariates),
            };
            let mut w = (-integral).exp();
            if r.delta {
                w *= spec.eval(r.t_obs, &r.covariates);
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::DegenerateWeight { index });
            }
            weights.push(w);
        }
        Ok(WeightVector {
            weights,
            theta: spec.clone(),
        })
    }
}

/// `ψ̂(θ) = n⁻¹ Σ wᵢYᵢ`, or `Σ cᵢwᵢYᵢ / Σ cᵢ` with case weights `c`.
/// Sums run sequentially in record order.
pub fn psi_hat<H: HazardIntegral>(
    ds: &Dataset,
    hazard: &H,
    spec: &ThetaSpec,
    case_weights: Option<&[f64]>,
) -> Result<f64> {
    let w = ipw_weights(ds, hazard, spec)?;
    weighted_mean(ds, &w.weights, case_weights)
}

pub(crate) fn weighted_mean(ds: &Dataset, w: &[f64], case_weights: Option<&[f64]>) -> Result<f64> {
    let recs = ds.records();
    match case_weights {
        None => {
            let mut num = 0.0;
            for (r, wi) in recs.iter().zip(w) {
                num += wi * r.y;
            }
            Ok(num / recs.len() as f64)
        }
        Some(c) => {
            if c.len() != recs.len() {
                return Err(Error::DimensionMismatch {
                    expected: recs.len(),
                    got: c.len(),
                });
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (index, ((r, wi), ci)) in recs.iter().zip(w).zip(c).enumerate() {
                if !(ci.is_finite() && *ci > 0.0) {
                    return Err(Error::InvalidWeights { index });
                }
                num += ci * wi * r.y;
                den += ci;
            }
            Ok(num / den)
        }
    }
}

/// Closed-form hazard `λ(t|l) = scale · t^power · exp(linkᵀl)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticHazard {
    pub scale: f64,
    pub power: f64,
    pub link: Vec<f64>,
}

impl AnalyticHazard {
    pub fn new(scale: f64, power: f64, link: Vec<f64>) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!("hazard scale must be positive, got {scale}")));
        }
        if !(power.is_finite() && power > -1.0) {
            return Err(Error::InvalidArgument(format!("hazard power must exceed -1, got {power}")));
        }
        if link.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("link coefficients must be finite".into()));
        }
        Ok(Self { scale, power, link })
    }

    pub fn hazard(&self, t: f64, l: &[f64]) -> f64 {
        let rr = self.link.iter().zip(l).map(|(c, x)| c * x).sum::<f64>().exp();
        if t <= 0.0 {
            return if self.power == 0.0 { self.scale * rr } else if self.power > 0.0 { 0.0 } else { f64::INFINITY };
        }
        self.scale * t.powf(self.power) * rr
    }

    fn check_dim(&self, l: &[f64]) -> Result<()> {
        if l.len() != self.link.len() {
            return Err(Error::DimensionMismatch {
                expected: self.link.len(),
                got: l.len(),
            });
        }
        Ok(())
    }

    /// `∫_a^b θ(s,l)·λ(s|l) ds` by adaptive quadrature.
    fn shifted_mass(&self, spec: &ThetaSpec, l: &[f64], a: f64, b: f64, tol: Tolerance) -> Result<f64> {
        let r = integrate_split(
            |s| spec.eval(s, l) * self.hazard(s, l),
            a,
            b,
            spec.breakpoints(),
            tol,
        )?;
        Ok(r.value)
    }

    /// Density of `T(θ)` at `t`: `θλ·exp(−∫₀ᵗ θλ)`.
    pub fn intervened_density(&self, spec: &ThetaSpec, l: &[f64], t: f64) -> Result<f64> {
        self.check_dim(l)?;
        if t < 0.0 {
            return Err(Error::NegativeGridTime);
        }
        let mass = self.shifted_mass(spec, l, 0.0, t, Tolerance::absolute(CURVE_TOL))?;
        Ok(spec.eval(t, l) * self.hazard(t, l) * (-mass).exp())
    }
}

const CURVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub hazard: f64,
    pub density: f64,
}

/// Hazard and density of `T(θ)` given `l` along an ascending grid.
pub fn intervention_curves(
    hazard: &AnalyticHazard,
    l: &[f64],
    spec: &ThetaSpec,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    hazard.check_dim(l)?;
    spec.check_dim(l.len())?;
    if grid.iter().any(|&t| t < 0.0) {
        return Err(Error::NegativeGridTime);
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("grid must be finite and ascending".into()));
    }
    let seg_tol = Tolerance {
        abs: CURVE_TOL / grid.len().max(1) as f64,
        rel: 1e-13,
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut prev = 0.0;
    let mut mass = 0.0;
    for &t in grid {
        mass += hazard.shifted_mass(spec, l, prev, t, seg_tol)?;
        prev = t;
        let h = spec.eval(t, l) * hazard.hazard(t, l);
        out.push(CurvePoint {
            t,
            hazard: h,
            density: h * (-mass).exp(),
        });
    }
    Ok(out)
}
