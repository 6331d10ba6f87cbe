//! Intervention specifications `θ(t, l)`.
//!
//! Every variant factors as `θ(t, l) = a(t)·b(l)`: constants have `a = b = c`
//! up to scaling, log-linear specs ignore `t`, and piecewise specs ignore `l`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplicative shift applied to the treatment-initiation hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaSpec {
    /// `θ ≡ c`.
    Constant(f64),
    /// `θ(t, l) = exp(coefᵀl)`.
    #[serde(rename = "loglinear")]
    LogLinear(Vec<f64>),
    /// `θ(t, l) = levels[j]` on `[breaks[j-1], breaks[j])`, uniform in `l`.
    Piecewise { breaks: Vec<f64>, levels: Vec<f64> },
}

impl ThetaSpec {
    pub fn constant(c: f64) -> Result<Self> {
        let spec = ThetaSpec::Constant(c);
        spec.check()?;
        Ok(spec)
    }

    pub fn log_linear(coef: Vec<f64>) -> Result<Self> {
        let spec = ThetaSpec::LogLinear(coef);
        spec.check()?;
        Ok(spec)
    }

    pub fn piecewise(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let spec = ThetaSpec::Piecewise { breaks, levels };
        spec.check()?;
        Ok(spec)
    }

    /// Checks positivity and shape; deserialized specs should pass through here.
    pub fn check(&self) -> Result<()> {
        match self {
            ThetaSpec::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::InvalidTheta(format!("constant {c} is not finite")));
                }
                if *c <= 0.0 {
                    return Err(Error::NonPositiveTheta);
                }
            }
            ThetaSpec::LogLinear(coef) => {
                if coef.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidTheta("log-linear coefficients must be finite".into()));
                }
            }
            ThetaSpec::Piecewise { breaks, levels } => {
                if levels.len() != breaks.len() + 1 {
                    return Err(Error::InvalidTheta(format!(
                        "{} breaks need {} levels, got {}",
                        breaks.len(),
                        breaks.len() + 1,
                        levels.len()
                    )));
                }
                if breaks.iter().any(|b| !b.is_finite()) || breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidTheta("breaks must be finite and strictly increasing".into()));
                }
                if levels.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidTheta("levels must be finite".into()));
                }
                if levels.iter().any(|&v| v <= 0.0) {
                    return Err(Error::NonPositiveTheta);
                }
            }
        }
        Ok(())
    }

    /// Checks the spec against a covariate dimension.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        self.check()?;
        match self {
            ThetaSpec::LogLinear(coef) if coef.len() != dim => Err(Error::DimensionMismatch {
                expected: dim,
                got: coef.len(),
            }),
            _ => Ok(()),
        }
    }

    /// `θ(t, l)`.
    pub fn eval(&self, t: f64, l: &[f64]) -> f64 {
        self.time_factor(t) * self.covariate_factor(l)
    }

    /// The `t`-dependent factor `a(t)`.
    pub fn time_factor(&self, t: f64) -> f64 {
        match self {
            ThetaSpec::Constant(_) | ThetaSpec::LogLinear(_) => 1.0,
            ThetaSpec::Piecewise { breaks, levels } => levels[breaks.partition_point(|&b| b <= t)],
        }
    }

    /// The `l`-dependent factor `b(l)`.
    pub fn covariate_factor(&self, l: &[f64]) -> f64 {
        match self {
            ThetaSpec::Constant(c) => *c,
            ThetaSpec::LogLinear(coef) => coef.iter().zip(l).map(|(c, x)| c * x).sum::<f64>().exp(),
            ThetaSpec::Piecewise { .. } => 1.0,
        }
    }

    /// Whether the spec is identically one (the factual law).
    pub fn is_identity(&self) -> bool {
        match self {
            ThetaSpec::Constant(c) => *c == 1.0,
            ThetaSpec::LogLinear(coef) => coef.iter().all(|&c| c == 0.0),
            ThetaSpec::Piecewise { levels, .. } => levels.iter().all(|&v| v == 1.0),
        }
    }

    /// Time breakpoints where `θ` may jump.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            ThetaSpec::Piecewise { breaks, .. } => breaks,
            _ => &[],
        }
    }

    /// Pieces `(start, end, level)` of the time factor covering `[0, ∞)`.
    pub fn time_pieces(&self) -> Vec<(f64, f64, f64)> {
        match self {
            ThetaSpec::Piecewise { breaks, levels } => {
                let mut edges = vec![f64::NEG_INFINITY];
                edges.extend(breaks.iter().copied());
                edges.push(f64::INFINITY);
                edges.windows(2).zip(levels).map(|(w, &v)| (w[0], w[1], v)).collect()
            }
            _ => vec![(f64::NEG_INFINITY, f64::INFINITY, 1.0)],
        }
    }
}

impl fmt::Display for ThetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        match self {
            ThetaSpec::Constant(c) => write!(f, "{c}"),
            ThetaSpec::LogLinear(coef) => write!(f, "loglinear:{}", list(coef)),
            ThetaSpec::Piecewise { breaks, levels } => {
                write!(f, "piecewise:{}|{}", list(breaks), list(levels))
            }
        }
    }
}

/// A spec with a display label, e.g. `1/3` or `beta1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTheta {
    pub label: String,
    pub spec: ThetaSpec,
}

impl NamedTheta {
    pub fn new(label: impl Into<String>, spec: ThetaSpec) -> Self {
        Self {
            label: label.into(),
            spec,
        }
    }
}

impl From<ThetaSpec> for NamedTheta {
    fn from(spec: ThetaSpec) -> Self {
        Self {
            label: spec.to_string(),
            spec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eval_variants() {
        assert_eq!(ThetaSpec::constant(2.0).unwrap().eval(0.7, &[3.0]), 2.0);
        assert_eq!(ThetaSpec::constant(1.0).unwrap().eval(0.0, &[]), 1.0);
        let ll = ThetaSpec::log_linear(vec![0.1, 0.2, 0.5]).unwrap();
        assert_abs_diff_eq!(ll.eval(1.0, &[1.0, 1.0, 1.0]), 0.8f64.exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(ll.eval(1.0, &[1.0, 1.0, 1.0]), 2.2255, epsilon = 1e-4);
        let pw = ThetaSpec::piecewise(vec![1.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(pw.eval(0.99, &[9.0]), 0.5);
        assert_eq!(pw.eval(1.0, &[9.0]), 3.0);
    }

    #[test]
    fn construction_rejects_nonpositive() {
        assert!(matches!(ThetaSpec::constant(0.0), Err(Error::NonPositiveTheta)));
        assert!(matches!(ThetaSpec::piecewise(vec![1.0], vec![1.0, -2.0]), Err(Error::NonPositiveTheta)));
        assert!(ThetaSpec::piecewise(vec![1.0, 0.5], vec![1.0, 1.0, 1.0]).is_err());
        assert!(ThetaSpec::piecewise(vec![1.0], vec![1.0]).is_err());
        assert!(matches!(
            ThetaSpec::LogLinear(vec![0.1]).check_dim(3),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn json_forms() {
        let cases = [
            (ThetaSpec::Constant(2.0), r#"{"constant":2.0}"#),
            (ThetaSpec::LogLinear(vec![0.1, 0.2]), r#"{"loglinear":[0.1,0.2]}"#),
            (
                ThetaSpec::Piecewise {
                    breaks: vec![1.0],
                    levels: vec![0.5, 2.0],
                },
                r#"{"piecewise":{"breaks":[1.0],"levels":[0.5,2.0]}}"#,
            ),
        ];
        for (spec, text) in cases {
            assert_eq!(serde_json::to_string(&spec).unwrap(), text);
            assert_eq!(serde_json::from_str::<ThetaSpec>(text).unwrap(), spec);
        }
    }
}
