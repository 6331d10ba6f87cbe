//! Observation records and datasets.
//!
//! Each subject contributes `(Y, T∧τ, Δ = 1(T < τ), L)`. Treatment times are
//! only administratively censored at the horizon `τ`, so a censored record
//! always carries `t_obs = τ` and `delta = false`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from `τ` within which a censored time is snapped onto `τ`.
pub const HORIZON_SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    /// Outcome measured at the horizon.
    pub y: f64,
    /// Observed treatment time `T ∧ τ`.
    pub t_obs: f64,
    /// Whether treatment was initiated before the horizon.
    pub delta: bool,
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(y: f64, t_obs: f64, delta: bool, covariates: Vec<f64>) -> Self {
        Self {
            y,
            t_obs,
            delta,
            covariates,
        }
    }
}

/// One violated invariant, indexed by record position (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Empty,
    InvalidHorizon,
    NameCountMismatch { names: usize, dim: usize },
    NonFinite(usize),
    NegativeTime(usize),
    TimeExceedsHorizon(usize),
    /// `delta = 0` with `t_obs ≠ τ`, or `delta = 1` with `t_obs ≥ τ`.
    DeltaTimeMismatch(usize),
    CovariateDimension(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "dataset is empty"),
            Violation::InvalidHorizon => write!(f, "horizon must be positive and finite"),
            Violation::NameCountMismatch { names, dim } => {
                write!(f, "{names} covariate names for dimension {dim}")
            }
            Violation::NonFinite(i) => write!(f, "record {i}: non-finite field"),
            Violation::NegativeTime(i) => write!(f, "record {i}: negative time"),
            Violation::TimeExceedsHorizon(i) => write!(f, "record {i}: time exceeds horizon"),
            Violation::DeltaTimeMismatch(i) => {
                write!(f, "record {i}: event indicator inconsistent with time")
            }
            Violation::CovariateDimension(i) => write!(f, "record {i}: wrong covariate count"),
        }
    }
}

/// An immutable, validated sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    records: Vec<SubjectRecord>,
    tau: f64,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, rejecting it if any invariant fails.
    pub fn new(records: Vec<SubjectRecord>, tau: f64, covariate_names: Vec<String>) -> Result<Self> {
        let ds = Self::unchecked(records, tau, covariate_names);
        let violations = validate(&ds);
        if violations.is_empty() {
            Ok(ds)
        } else {
            let msg = violations
                .iter()
                .take(5)
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidDataset(msg))
        }
    }

    /// Builds a dataset without checking invariants. Intended for
    /// diagnostics via [`validate`]; estimators assume validity.
    pub fn unchecked(records: Vec<SubjectRecord>, tau: f64, covariate_names: Vec<String>) -> Self {
        Self {
            records,
            tau,
            covariate_names,
        }
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension `d`.
    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.delta).count()
    }

    /// Sample mean of the outcome, summed sequentially in record order.
    pub fn mean_y(&self) -> f64 {
        let mut sum = 0.0;
        for r in &self.records {
            sum += r.y;
        }
        sum / self.records.len() as f64
    }
}

/// Lists every violated invariant; an empty list means the dataset is valid.
pub fn validate(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if ds.records.is_empty() {
        out.push(Violation::Empty);
    }
    if !(ds.tau.is_finite() && ds.tau > 0.0) {
        out.push(Violation::InvalidHorizon);
    }
    let dim = ds
        .records
        .first()
        .map_or(ds.covariate_names.len(), |r| r.covariates.len());
    if ds.covariate_names.len() != dim {
        out.push(Violation::NameCountMismatch {
            names: ds.covariate_names.len(),
            dim,
        });
    }
    for (i, r) in ds.records.iter().enumerate() {
        if !(r.y.is_finite() && r.t_obs.is_finite() && r.covariates.iter().all(|v| v.is_finite())) {
            out.push(Violation::NonFinite(i));
            continue;
        }
        if r.covariates.len() != dim {
            out.push(Violation::CovariateDimension(i));
        }
        if r.t_obs < 0.0 {
            out.push(Violation::NegativeTime(i));
        } else if r.t_obs > ds.tau {
            out.push(Violation::TimeExceedsHorizon(i));
        } else if r.delta == (r.t_obs == ds.tau) {
            out.push(Violation::DeltaTimeMismatch(i));
        }
    }
    out
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub y: String,
    pub time: String,
    pub delta: String,
    /// Covariate columns; `None` takes every remaining column in header order.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            y: "y".into(),
            time: "time".into(),
            delta: "delta".into(),
            covariates: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, tau: f64, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, tau, schema)
}

/// Parses a dataset from CSV. Row numbers in errors are 1-based data rows.
pub fn read_csv<R: Read>(reader: R, tau: f64, schema: &CsvSchema) -> Result<Dataset> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {tau}")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let iy = find(&schema.y)?;
    let it = find(&schema.time)?;
    let id = find(&schema.delta)?;
    let (cov_idx, names): (Vec<usize>, Vec<String>) = match &schema.covariates {
        Some(cols) => {
            let idx = cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
            (idx, cols.clone())
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![iy, it, id].contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .unzip(),
    };

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row_no = k + 1;
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            let raw = row.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                column: headers.get(i).unwrap_or("").to_string(),
                value: raw.to_string(),
            })
        };
        let y = num(iy)?;
        let mut t_obs = num(it)?;
        let delta_raw = num(id).map_err(|_| Error::InvalidDelta {
            row: row_no,
            value: row.get(id).unwrap_or("").to_string(),
        })?;
        let delta = match delta_raw {
            1.0 => true,
            0.0 => false,
            _ => {
                return Err(Error::InvalidDelta {
                    row: row_no,
                    value: row.get(id).unwrap_or("").to_string(),
                })
            }
        };
        let covariates = cov_idx.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?;
        if !(y.is_finite() && t_obs.is_finite() && covariates.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { row: row_no });
        }
        if t_obs < 0.0 {
            return Err(Error::NegativeTime { row: row_no });
        }
        if delta {
            if t_obs >= tau {
                return Err(Error::DeltaTimeMismatch { row: row_no });
            }
        } else if (t_obs - tau).abs() <= HORIZON_SNAP_TOL {
            t_obs = tau;
        } else {
            return Err(Error::DeltaTimeMismatch { row: row_no });
        }
        records.push(SubjectRecord::new(y, t_obs, delta, covariates));
    }
    Dataset::new(records, tau, names)
}

/// Writes `y,time,delta,<covariates>` with shortest round-trip float text.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string(), "time".to_string(), "delta".to_string()];
    header.extend(ds.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &ds.records {
        let mut row = Vec::with_capacity(3 + r.covariates.len());
        row.push(r.y.to_string());
        row.push(r.t_obs.to_string());
        row.push(if r.delta { "1" } else { "0" }.to_string());
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, tau: f64) -> Result<Dataset> {
        read_csv(text.as_bytes(), tau, &CsvSchema::default())
    }

    #[test]
    fn single_row_maps_fields() {
        let ds = parse("y,time,delta,l1\n0.5,1.0,1,0.3\n", 2.0).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 1);
        assert_eq!(ds.records()[0], SubjectRecord::new(0.5, 1.0, true, vec![0.3]));
        assert_eq!(ds.covariate_names(), ["l1"]);
    }

    #[test]
    fn event_at_horizon_is_rejected() {
        let err = parse("y,time,delta,l1\n0.5,2.0,1,0.3\n", 2.0).unwrap_err();
        assert!(matches!(err, Error::DeltaTimeMismatch { row: 1 }));
    }

    #[test]
    fn censored_at_horizon_is_accepted_and_snapped() {
        let ds = parse("y,time,delta,l1\n0.5,2.0,0,0.3\n0.1,1.9999999999,0,1\n", 2.0).unwrap();
        assert_eq!(ds.records()[0].t_obs, 2.0);
        assert_eq!(ds.records()[1].t_obs, 2.0);
        let err = parse("y,time,delta,l1\n0.5,1.5,0,0.3\n", 2.0).unwrap_err();
        assert!(matches!(err, Error::DeltaTimeMismatch { row: 1 }));
    }

    #[test]
    fn missing_and_nonfinite_columns() {
        let err = parse("y,t,delta\n0.5,1.0,1\n", 2.0).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "time"));
        let err = parse("y,time,delta,l1\n0.5,1.0,1,0.3\nNaN,1.0,1,0.3\n", 2.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 2 }));
    }

    #[test]
    fn explicit_covariate_selection() {
        let schema = CsvSchema {
            y: "out".into(),
            time: "tt".into(),
            delta: "ev".into(),
            covariates: Some(vec!["b".into()]),
        };
        let ds = read_csv("a,out,tt,ev,b\n9,1,0.5,1,7\n".as_bytes(), 1.0, &schema).unwrap();
        assert_eq!(ds.records()[0].covariates, vec![7.0]);
        assert_eq!(ds.records()[0].y, 1.0);
    }

    #[test]
    fn validate_reports_each_violation() {
        let good = Dataset::unchecked(
            vec![
                SubjectRecord::new(1.0, 0.5, true, vec![0.0]),
                SubjectRecord::new(1.0, 1.5, true, vec![1.0]),
                SubjectRecord::new(1.0, 2.0, false, vec![2.0]),
            ],
            2.0,
            vec!["l".into()],
        );
        assert!(validate(&good).is_empty());

        let nan = Dataset::unchecked(
            vec![SubjectRecord::new(1.0, 0.5, true, vec![0.0]), SubjectRecord::new(f64::NAN, 1.0, true, vec![0.0])],
            2.0,
            vec!["l".into()],
        );
        assert_eq!(validate(&nan), vec![Violation::NonFinite(1)]);

        let late = Dataset::unchecked(
            vec![SubjectRecord::new(1.0, 3.0, false, vec![0.0])],
            2.0,
            vec!["l".into()],
        );
        assert_eq!(validate(&late), vec![Violation::TimeExceedsHorizon(0)]);
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let text = "y,time,delta,l1,l2\n0.123456789012345,0.25,1,-1.5,3\n2.5,2,0,0.1,1e-7\n";
        let ds = parse(text, 2.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), 2.0, &CsvSchema::default()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn mean_y_is_sequential_sum_over_n() {
        let ds = parse("y,time,delta\n0.1,1,1\n0.2,2,0\n0.3,0.5,1\n", 2.0).unwrap();
        assert_eq!(ds.mean_y(), (0.1 + 0.2 + 0.3) / 3.0);
    }
}
