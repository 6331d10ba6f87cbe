//! Incremental causal effects of shifting the hazard of time to treatment
//! initialization.
//!
//! An incremental intervention replaces the factual treatment-initiation
//! hazard `λ(t|l)` by `θ(t,l)·λ(t|l)`. The mean potential outcome under the
//! shifted law, `ψ(θ)`, is identified by reweighting observed outcomes with
//!
//! ```text
//! w = θ(T,L)^Δ · exp(−∫₀^{T∧τ} (θ(t,L) − 1) dΛ(t|L))
//! ```
//!
//! which needs no positivity assumption on the treatment process.
//!
//! Module map:
//! - [`data`]: observation records, datasets, CSV ingestion and validation.
//! - [`km`]: Kaplan–Meier curve of the treatment-initiation distribution.
//! - [`cox`]: Cox proportional-hazards fit with Breslow baseline, plus
//!   Schoenfeld residual diagnostics.
//! - [`theta`] and [`effect`]: intervention specifications, IPW weights,
//!   the plug-in estimator and intervention curves.
//! - [`inference`]: multiplier bootstrap and effect curves.
//! - [`sim`]: data-generating processes, a quadrature oracle for the true
//!   effect, and the Monte-Carlo study runner.

pub mod cox;
pub mod data;
pub mod effect;
pub mod error;
pub mod inference;
pub mod km;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod theta;

pub use cox::{cumulative_hazard, fit_cox, schoenfeld, CoxFit, CoxProblem, SchoenfeldReport};
pub use data::{load_csv, validate, write_csv, CsvSchema, Dataset, SubjectRecord, Violation};
pub use effect::{
    intervention_curves, ipw_weights, psi_hat, AnalyticHazard, CurvePoint, FittedWeights, HazardIntegral,
    WeightSummary, WeightVector,
};
pub use error::{Error, Result};
pub use inference::{effect_curve, multiplier_bootstrap, EffectEstimate, Z_975};
pub use km::{kaplan_meier, KaplanMeier, StepCurve};
pub use sim::{generate, oracle_psi, run_study, Dgp, StudyConfig, StudyReport, StudyRow};
pub use theta::{NamedTheta, ThetaSpec};
