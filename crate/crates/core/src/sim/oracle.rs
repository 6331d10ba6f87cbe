//! True `ψ(θ)` for the simulation designs.
//!
//! Under the intervention `T(θ)` given `L = l` has hazard
//! `θ(t,l)·rate(l)`, so its survival is `exp(−rate(l)·b(l)·A(t))` with
//! `A(t) = ∫₀ᵗ a(s) ds`. Then
//!
//! ```text
//! ψ(θ) = E_L [ ∫₀^τ μ(t,L) f_θ(t|L) dt + μ(τ,L) S_θ(τ|L) ]
//! ```
//!
//! evaluated by nested adaptive quadrature. Nothing here touches the
//! estimation path (Cox fits or IPW weights).

use std::cell::RefCell;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::distribution::{Continuous, Normal};

use super::dgp::{Dgp, TAU};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_split, Tolerance};
use crate::rng::stream_rng;
use crate::theta::ThetaSpec;

const INNER_TOL: f64 = 1e-11;
const MIDDLE_TOL: f64 = 1e-10;
const OUTER_TOL: f64 = 1e-9;
/// Half-width, in standard deviations, of the integration window for `L₂`.
const NORMAL_SPAN: f64 = 8.0;

/// `A(t) = ∫₀ᵗ a(s) ds` for the time factor of `spec`.
fn time_factor_integral(spec: &ThetaSpec, t: f64) -> f64 {
    match spec {
        ThetaSpec::Constant(_) | ThetaSpec::LogLinear(_) => t,
        ThetaSpec::Piecewise { breaks, levels } => {
            let mut acc = 0.0;
            let mut lo = 0.0_f64;
            for (j, &level) in levels.iter().enumerate() {
                let hi = breaks.get(j).copied().unwrap_or(f64::INFINITY);
                let (a, b) = (lo.max(0.0), hi.min(t));
                if b > a {
                    acc += level * (b - a);
                }
                lo = hi;
            }
            acc
        }
    }
}

/// `E[μ(T(θ)∧τ, l) | L = l]`.
fn conditional_mean(dgp: Dgp, spec: &ThetaSpec, l: &[f64]) -> Result<f64> {
    let scale = dgp.rate(l) * spec.covariate_factor(l);
    let survival = |t: f64| (-scale * time_factor_integral(spec, t)).exp();
    let body = integrate_split(
        |t| dgp.outcome_mean(t, l) * spec.time_factor(t) * scale * survival(t),
        0.0,
        TAU,
        spec.breakpoints(),
        Tolerance::absolute(INNER_TOL),
    )?;
    Ok(body.value + dgp.outcome_mean(TAU, l) * survival(TAU))
}

/// Integrates `f` over `[a, b]` where `f` itself may fail; the first inner
/// failure is reported.
fn nested<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let failure = RefCell::new(None);
    let r = integrate(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        Tolerance::absolute(tol),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(r?.value)
}

/// True incremental effect `ψ(θ)` for `dgp`.
pub fn oracle_psi(dgp: Dgp, theta: &ThetaSpec) -> Result<f64> {
    theta.check_dim(dgp.dim())?;
    match dgp {
        Dgp::Main => nested(|l| conditional_mean(dgp, theta, &[l]), 0.0, 1.0, OUTER_TOL),
        Dgp::Multi => {
            let normal = Normal::new(0.5, 0.25).expect("valid normal");
            let (lo, hi) = (0.5 - NORMAL_SPAN * 0.25, 0.5 + NORMAL_SPAN * 0.25);
            let mut total = 0.0;
            for l3 in [0.0, 1.0] {
                let part = nested(
                    |l1| {
                        nested(
                            |l2| Ok(normal.pdf(l2) * conditional_mean(dgp, theta, &[l1, l2, l3])?),
                            lo,
                            hi,
                            MIDDLE_TOL,
                        )
                    },
                    0.0,
                    1.0,
                    OUTER_TOL,
                )?;
                total += 0.5 * part;
            }
            Ok(total)
        }
    }
}

/// Draws `T(θ)` given `l` by inverting `rate(l)·b(l)·A(t) = E`, `E ~ Exp(1)`.
pub fn sample_intervened_time<R: Rng + ?Sized>(dgp: Dgp, spec: &ThetaSpec, l: &[f64], rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    let scale = dgp.rate(l) * spec.covariate_factor(l);
    let mut remaining = e / scale;
    for (start, end, level) in spec.time_pieces() {
        let start = start.max(0.0);
        if end <= start {
            continue;
        }
        let capacity = level * (end - start);
        if remaining <= capacity {
            return start + remaining / level;
        }
        remaining -= capacity;
    }
    f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo `ψ(θ)` from `draws` simulated subjects under the intervention,
/// averaging the outcome mean at `T(θ)∧τ`.
pub fn monte_carlo_psi(dgp: Dgp, spec: &ThetaSpec, draws: usize, seed: u64) -> Result<MonteCarloEstimate> {
    spec.check_dim(dgp.dim())?;
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..draws {
        let l = dgp.sample_covariates(&mut rng);
        let t = sample_intervened_time(dgp, spec, &l, &mut rng);
        let v = dgp.outcome_mean(t.min(TAU), &l);
        sum += v;
        sq += v * v;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sq - m * mean * mean) / (m - 1.0);
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / m).sqrt(),
    })
}
