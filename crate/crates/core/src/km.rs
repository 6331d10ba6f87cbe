//! Kaplan–Meier estimate of the treatment-initiation distribution.

use serde::Serialize;

use crate::data::Dataset;
use crate::inference::Z_975;

/// Right-continuous step function on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Value before the first grid time.
    pub origin: f64,
}

impl StepCurve {
    /// Number of grid times `≤ t`.
    fn index(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.index(t) {
            0 => self.origin,
            k => self.values[k - 1],
        }
    }

    /// Pointwise band at `t`, if bands exist. Before the first jump the band
    /// collapses onto the origin.
    pub fn band(&self, t: f64) -> Option<(f64, f64)> {
        let (lo, hi) = (self.lower.as_ref()?, self.upper.as_ref()?);
        Some(match self.index(t) {
            0 => (self.origin, self.origin),
            k => (lo[k - 1], hi[k - 1]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaplanMeier {
    /// `S(t) = P(T > t)`.
    pub survival: StepCurve,
    /// `P(T ≤ t) = 1 − S(t)`, bands mirrored from the survival bands.
    pub cumulative: StepCurve,
    /// Greenwood variance of `S` at each event time.
    pub greenwood: Vec<f64>,
    /// Set when there are no events; the curves are flat and carry no bands.
    pub no_events: bool,
}

impl KaplanMeier {
    pub fn greenwood_variance(&self, t: f64) -> f64 {
        match self.survival.index(t) {
            0 => 0.0,
            k => self.greenwood[k - 1],
        }
    }
}

/// Product-limit estimate over the distinct event times, Greenwood variance
/// and 95% log(−log S) pointwise bands.
pub fn kaplan_meier(ds: &Dataset) -> KaplanMeier {
    let mut obs: Vec<(f64, bool)> = ds.records().iter().map(|r| (r.t_obs, r.delta)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut times = Vec::new();
    let mut surv = Vec::new();
    let mut greenwood = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();

    let total = obs.len() as f64;
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut cdf = Vec::new();
    // Until the first censoring the product telescopes to `(N − events)/N`;
    // using that form keeps `1 − S` equal to the empirical CDF bit for bit.
    let mut censored = false;
    let mut events = 0usize;
    let mut gw_sum = 0.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut deaths = 0usize;
        let mut leaving = 0usize;
        while i < obs.len() && obs[i].0 == t {
            deaths += usize::from(obs[i].1);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            let (n, d) = (at_risk as f64, deaths as f64);
            events += deaths;
            if censored {
                s *= 1.0 - d / n;
                cdf.push(1.0 - s);
            } else {
                s = (total - events as f64) / total;
                cdf.push(events as f64 / total);
            }
            gw_sum += if deaths < at_risk { d / (n * (n - d)) } else { f64::INFINITY };
            times.push(t);
            surv.push(s);
            greenwood.push(if s > 0.0 { s * s * gw_sum } else { 0.0 });
            let (lo, hi) = loglog_band(s, gw_sum);
            lower.push(lo);
            upper.push(hi);
        }
        censored |= leaving > deaths;
        at_risk -= leaving;
    }

    let no_events = times.is_empty();
    let bands = |v: Vec<f64>| if no_events { None } else { Some(v) };
    let cumulative = StepCurve {
        times: times.clone(),
        values: cdf,
        lower: bands(upper.iter().map(|u| 1.0 - u).collect()),
        upper: bands(lower.iter().map(|l| 1.0 - l).collect()),
        origin: 0.0,
    };
    let survival = StepCurve {
        times,
        values: surv,
        lower: bands(lower),
        upper: bands(upper),
        origin: 1.0,
    };
    KaplanMeier {
        survival,
        cumulative,
        greenwood,
        no_events,
    }
}

/// Band `S^{exp(±z·se)}` where `se` is the delta-method standard error of
/// `log(−log S)`.
fn loglog_band(s: f64, gw_sum: f64) -> (f64, f64) {
    if s <= 0.0 || !gw_sum.is_finite() {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 1.0);
    }
    let se = gw_sum.sqrt() / s.ln().abs();
    let lo = s.powf((Z_975 * se).exp());
    let hi = s.powf((-Z_975 * se).exp());
    (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
}
