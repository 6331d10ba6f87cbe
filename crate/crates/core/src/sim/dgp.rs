use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::effect::HazardIntegral;
use crate::rng::stream_rng;
use crate::theta::{NamedTheta, ThetaSpec};

/// Horizon shared by both designs.
pub const TAU: f64 = 2.0;
pub const OUTCOME_SD: f64 = 0.5;

/// Simulation designs with exponential treatment times given covariates.
///
/// - `Main`: `L ~ U(0,1)`, rate `exp(0.25 L)`, outcome mean
///   `exp(1 − 1.5L − (2 − T∧2))`.
/// - `Multi`: `L₁ ~ U(0,1)`, `L₂ ~ N(0.5, 0.25²)`, `L₃ ~ Bernoulli(0.5)`,
///   rate `exp(0.1L₁ + 0.05L₂ + 0.1L₃)`, outcome mean
///   `exp(1 − (0.6L₁ + 0.3L₂ + 0.6L₃) − (2 − T∧2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    Main,
    Multi,
}

impl Dgp {
    pub fn dim(self) -> usize {
        match self {
            Dgp::Main => 1,
            Dgp::Multi => 3,
        }
    }

    pub fn covariate_names(self) -> Vec<String> {
        match self {
            Dgp::Main => vec!["l".into()],
            Dgp::Multi => vec!["l1".into(), "l2".into(), "l3".into()],
        }
    }

    /// Hazard of treatment initiation, constant in time.
    pub fn rate(self, l: &[f64]) -> f64 {
        match self {
            Dgp::Main => (0.25 * l[0]).exp(),
            Dgp::Multi => (0.1 * l[0] + 0.05 * l[1] + 0.1 * l[2]).exp(),
        }
    }

    /// Outcome mean given the observed time `t = T∧τ`.
    pub fn outcome_mean(self, t: f64, l: &[f64]) -> f64 {
        let delay = TAU - t.min(TAU);
        match self {
            Dgp::Main => (1.0 - 1.5 * l[0] - delay).exp(),
            Dgp::Multi => (1.0 - (0.6 * l[0] + 0.3 * l[1] + 0.6 * l[2]) - delay).exp(),
        }
    }

    pub fn sample_covariates<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<f64> {
        match self {
            Dgp::Main => vec![rng.random::<f64>()],
            Dgp::Multi => {
                let l1 = rng.random::<f64>();
                let l2 = Normal::new(0.5, 0.25).expect("valid normal").sample(rng);
                let l3 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                vec![l1, l2, l3]
            }
        }
    }

    /// The θ grid studied for this design: eight constants for `Main`, nine
    /// log-linear specs for `Multi`.
    pub fn default_grid(self) -> Vec<NamedTheta> {
        match self {
            Dgp::Main => [
                ("1/3", 1.0 / 3.0),
                ("1/2.5", 1.0 / 2.5),
                ("1/2", 1.0 / 2.0),
                ("1/1.5", 1.0 / 1.5),
                ("1.5", 1.5),
                ("2", 2.0),
                ("2.5", 2.5),
                ("3", 3.0),
            ]
            .into_iter()
            .map(|(label, c)| NamedTheta::new(label, ThetaSpec::Constant(c)))
            .collect(),
            Dgp::Multi => [
                [0.1, 0.1, 0.1],
                [0.2, 0.2, 0.2],
                [0.5, 0.5, 0.5],
                [0.1, 0.2, 0.5],
                [0.1, 0.5, 0.2],
                [0.2, 0.1, 0.5],
                [0.2, 0.5, 0.1],
                [0.5, 0.1, 0.2],
                [0.5, 0.2, 0.1],
            ]
            .into_iter()
            .enumerate()
            .map(|(k, c)| NamedTheta::new(format!("beta{}", k + 1), ThetaSpec::LogLinear(c.to_vec())))
            .collect(),
        }
    }
}

impl std::str::FromStr for Dgp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "main" => Ok(Dgp::Main),
            "multi" => Ok(Dgp::Multi),
            other => Err(format!("unknown design `{other}` (expected main or multi)")),
        }
    }
}

/// Draws `n` subjects from `rng`.
pub fn generate_with<R: Rng + ?Sized>(dgp: Dgp, n: usize, rng: &mut R) -> Dataset {
    let noise = Normal::new(0.0, OUTCOME_SD).expect("valid normal");
    let records = (0..n)
        .map(|_| {
            let l = dgp.sample_covariates(rng);
            let u: f64 = rng.random();
            let t = -(1.0 - u).ln() / dgp.rate(&l);
            let delta = t < TAU;
            let t_obs = if delta { t } else { TAU };
            let y = dgp.outcome_mean(t_obs, &l) + noise.sample(rng);
            SubjectRecord::new(y, t_obs, delta, l)
        })
        .collect();
    Dataset::new(records, TAU, dgp.covariate_names()).expect("generated data satisfies invariants")
}

/// Draws `n` subjects deterministically from `seed`.
pub fn generate(dgp: Dgp, n: usize, seed: u64) -> Dataset {
    generate_with(dgp, n, &mut stream_rng(seed, 0))
}

/// The design's true cumulative hazard `Λ(t|l) = rate(l)·t`.
#[derive(Debug, Clone, Copy)]
pub struct TrueHazard(pub Dgp);

impl HazardIntegral for TrueHazard {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn shifted_integral(&self, spec: &ThetaSpec, t: f64, l: &[f64]) -> f64 {
        let rate = self.0.rate(l);
        let b = spec.covariate_factor(l);
        let mut acc = 0.0;
        for (start, end, level) in spec.time_pieces() {
            let len = end.min(t) - start.max(0.0);
            if len > 0.0 {
                acc += (level * b - 1.0) * len;
            }
        }
        rate * acc
    }
}
