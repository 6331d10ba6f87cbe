//! Closed-form and brute-force references, independent of the library's
//! quadrature and estimation code.

#![allow(dead_code)]

use hazshift::{Dataset, SubjectRecord};
use proptest::prelude::*;

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// `E[exp(−(2 − T∧2))]` for `T ~ Exp(r)`, in closed form.
fn delay_factor(r: f64) -> f64 {
    // ∫₀² e^{−(2−t)} r e^{−rt} dt + e^{−2r}
    let x = r - 1.0;
    let ratio = if x.abs() < 1e-12 { 2.0 } else { -(-2.0 * x).exp_m1() / x };
    r * (-2.0f64).exp() * ratio + (-2.0 * r).exp()
}

/// ψ(c) for the single-covariate design under `θ ≡ c`.
pub fn main_psi(c: f64) -> f64 {
    simpson(
        |l| (1.0 - 1.5 * l).exp() * delay_factor(c * (0.25 * l).exp()),
        0.0,
        1.0,
        4000,
    )
}

/// ψ for the three-covariate design under `θ(l) = exp(coefᵀl)`.
pub fn multi_psi(coef: [f64; 3]) -> f64 {
    let (mu2, sd2) = (0.5, 0.25);
    let pdf = |x: f64| (-(x - mu2) * (x - mu2) / (2.0 * sd2 * sd2)).exp() / (sd2 * (2.0 * std::f64::consts::PI).sqrt());
    let mut total = 0.0;
    for l3 in [0.0, 1.0] {
        let inner = |l1: f64| {
            simpson(
                |l2| {
                    let rate = (0.1 * l1 + 0.05 * l2 + 0.1 * l3).exp() * (coef[0] * l1 + coef[1] * l2 + coef[2] * l3).exp();
                    pdf(l2) * (1.0 - (0.6 * l1 + 0.3 * l2 + 0.6 * l3)).exp() * delay_factor(rate)
                },
                mu2 - 8.0 * sd2,
                mu2 + 8.0 * sd2,
                800,
            )
        };
        total += 0.5 * simpson(inner, 0.0, 1.0, 200);
    }
    total
}

/// `P(T ≤ 2)` in the single-covariate design.
pub fn main_event_fraction() -> f64 {
    simpson(|l| -(-2.0 * (0.25 * l).exp()).exp_m1(), 0.0, 1.0, 4000)
}

/// Random small survival datasets with distinct event times, at least one
/// event, `d` covariates and horizon 10 (censored records sit at the horizon).
pub fn small_dataset(n: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Dataset> {
    (n, Just(d))
        .prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(0.01f64..9.0, n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n),
                prop::collection::vec(-3.0f64..3.0, n),
                Just(d),
            )
        })
        .prop_filter_map("needs distinct times and an event", |(times, deltas, covs, ys, d)| {
            let mut sorted: Vec<f64> = times.iter().zip(&deltas).filter(|(_, &d)| d).map(|(&t, _)| t).collect();
            sorted.sort_by(f64::total_cmp);
            if sorted.is_empty() || sorted.windows(2).any(|w| w[1] - w[0] < 1e-6) {
                return None;
            }
            let recs = times
                .iter()
                .zip(&deltas)
                .zip(covs)
                .zip(&ys)
                .map(|(((&t, &delta), l), &y)| SubjectRecord::new(y, if delta { t } else { 10.0 }, delta, l))
                .collect();
            let names = (0..d).map(|j| format!("x{j}")).collect();
            Dataset::new(recs, 10.0, names).ok()
        })
}
