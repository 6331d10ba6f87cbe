//! Parsing of `--theta` values.
//!
//! A value is a comma-separated list of tokens:
//!
//! - a positive constant, written as a decimal or a fraction `a/b`;
//! - `loglinear:c1,c2,...`, which takes exactly as many coefficients as the
//!   data have covariates;
//! - a whole value prefixed `json:` holding one spec or an array of specs in
//!   the serialized form, e.g. `json:{"piecewise":{"breaks":[1],"levels":[2,0.5]}}`.
//!
//! Labels are the tokens as written.

use anyhow::{anyhow, bail, Context, Result};
use hazshift::{NamedTheta, ThetaSpec};

fn number(token: &str) -> Result<f64> {
    let token = token.trim();
    let value = match token.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().with_context(|| format!("bad numerator in {token:?}"))?;
            let b: f64 = b.trim().parse().with_context(|| format!("bad denominator in {token:?}"))?;
            a / b
        }
        None => token.parse().with_context(|| format!("not a number: {token:?}"))?,
    };
    Ok(value)
}

/// Parses every `--theta` occurrence against covariate dimension `dim`.
pub fn parse_grid(values: &[String], dim: usize) -> Result<Vec<NamedTheta>> {
    let mut grid = Vec::new();
    for value in values {
        grid.extend(parse_value(value, dim)?);
    }
    if grid.is_empty() {
        bail!("theta grid is empty");
    }
    for th in &grid {
        th.spec.check_dim(dim)?;
    }
    Ok(grid)
}

fn parse_value(value: &str, dim: usize) -> Result<Vec<NamedTheta>> {
    if let Some(json) = value.trim().strip_prefix("json:") {
        let parsed: serde_json::Value = serde_json::from_str(json).context("invalid JSON theta")?;
        let specs: Vec<ThetaSpec> = match parsed {
            serde_json::Value::Array(_) => serde_json::from_value(parsed)?,
            other => vec![serde_json::from_value(other)?],
        };
        return Ok(specs.into_iter().map(NamedTheta::from).collect());
    }

    let pieces: Vec<&str> = value.split(',').map(str::trim).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let piece = pieces[i];
        if let Some(first) = piece.strip_prefix("loglinear:") {
            let end = i + dim;
            if end > pieces.len() || dim == 0 {
                return Err(anyhow!("loglinear token needs {dim} coefficients in {value:?}"));
            }
            let mut coef = vec![number(first)?];
            for p in &pieces[i + 1..end] {
                coef.push(number(p)?);
            }
            out.push(NamedTheta::new(pieces[i..end].join(","), ThetaSpec::LogLinear(coef)));
            i = end;
        } else {
            if piece.is_empty() {
                bail!("empty theta token in {value:?}");
            }
            out.push(NamedTheta::new(piece, ThetaSpec::Constant(number(piece)?)));
            i += 1;
        }
    }
    Ok(out)
}
