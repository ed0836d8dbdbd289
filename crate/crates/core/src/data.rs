//! Right-censored survival data: validation, indexing, and the at-risk /
//! counting-process primitives everything else is built on.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{MrlError, Result};

/// One subject: covariate vector, observed time `z = min(T, C)`, and the
/// event indicator `delta = I(T <= C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub x: Vec<f64>,
    pub z: f64,
    pub delta: u8,
}

impl SurvivalRecord {
    pub fn new(x: Vec<f64>, z: f64, delta: u8) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(MrlError::InvalidArgument(format!(
                "observed time must be finite and positive, got {z}"
            )));
        }
        if delta > 1 {
            return Err(MrlError::InvalidArgument(format!(
                "event indicator must be 0 or 1, got {delta}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MrlError::InvalidArgument(
                "covariates contain a non-finite entry".into(),
            ));
        }
        Ok(Self { x, z, delta })
    }
}

/// Validated collection of records with cached risk-set structure.
///
/// `ordered_event_times` holds the sorted distinct observed event times
/// tau_(1) < ... < tau_(n_T); `n_events` is their count n_T. Ties among
/// events are retained as distinct records and contribute additive jumps
/// to the Nelson-Aalen sums.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    p: usize,
    tau: f64,
    ordered_event_times: Vec<f64>,
    n_events: usize,
    /// Record indices in canonical order: ascending (z, delta, x).
    /// Iterating sums in this order makes them invariant under any
    /// permutation of the input rows, bit for bit.
    canonical: Vec<usize>,
}

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(MrlError::NoRecords);
        }
        let p = records[0].x.len();
        if p == 0 {
            return Err(MrlError::Schema("at least one covariate required".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != p {
                return Err(MrlError::Row {
                    row: i,
                    message: format!("expected {} covariates, found {}", p, r.x.len()),
                });
            }
        }
        let tau = records.iter().map(|r| r.z).fold(f64::NEG_INFINITY, f64::max);
        let mut event_times: Vec<f64> = records
            .iter()
            .filter(|r| r.delta == 1)
            .map(|r| r.z)
            .collect();
        event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        event_times.dedup();

        let mut canonical: Vec<usize> = (0..records.len()).collect();
        canonical.sort_by(|&a, &b| cmp_records(&records[a], &records[b]));

        Ok(Self {
            p,
            tau,
            n_events: event_times.len(),
            ordered_event_times: event_times,
            records,
            canonical,
        })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Largest observed z; the follow-up bound tau.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Sorted distinct observed event times tau_(1)..tau_(n_T).
    pub fn ordered_event_times(&self) -> &[f64] {
        &self.ordered_event_times
    }

    /// n_T, the number of distinct observed event times.
    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Record indices sorted ascending by (z, delta, x); permutation-stable.
    pub fn canonical_order(&self) -> &[usize] {
        &self.canonical
    }

    /// The at-risk process Y_i(t) = I(Z_i >= t) for every subject.
    pub fn at_risk(&self, t: f64) -> Result<Vec<u8>> {
        if !(t >= 0.0) {
            return Err(MrlError::InvalidArgument(format!(
                "at_risk requires t >= 0, got {t}"
            )));
        }
        Ok(self
            .records
            .iter()
            .map(|r| u8::from(r.z >= t))
            .collect())
    }

    /// Sample standard deviation of the observed times.
    pub fn time_sd(&self) -> f64 {
        crate::numeric::sample_sd(self.records.iter().map(|r| r.z))
    }
}

fn cmp_records(a: &SurvivalRecord, b: &SurvivalRecord) -> Ordering {
    a.z.partial_cmp(&b.z)
        .unwrap()
        .then(a.delta.cmp(&b.delta))
        .then_with(|| {
            for (u, v) in a.x.iter().zip(&b.x) {
                match u.partial_cmp(v).unwrap() {
                    Ordering::Equal => continue,
                    ord => return ord,
                }
            }
            Ordering::Equal
        })
}

/// Column selection for CSV input and output.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time: String,
    pub event: String,
    pub covariates: Vec<String>,
}

impl CsvSchema {
    /// Schema with the given time/event columns and every remaining header
    /// column treated as a covariate, in header order.
    pub fn infer(headers: &[String], time: &str, event: &str) -> Result<Self> {
        let covariates: Vec<String> = headers
            .iter()
            .filter(|h| h.as_str() != time && h.as_str() != event)
            .cloned()
            .collect();
        if covariates.is_empty() {
            return Err(MrlError::Schema(
                "no covariate columns remain after time and event".into(),
            ));
        }
        Ok(Self {
            time: time.into(),
            event: event.into(),
            covariates,
        })
    }
}

/// Read a UTF-8, comma-separated file with a header row. Missing values are
/// a hard error; row indices in errors are zero-based data rows.
pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MrlError::Schema(format!("missing column `{name}`")))
    };
    let time_idx = find(&schema.time)?;
    let event_idx = find(&schema.event)?;
    let cov_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.trim()
                .parse::<f64>()
                .map_err(|_| MrlError::Row {
                    row,
                    message: format!("non-numeric cell `{raw}` in column `{}`", headers[idx]),
                })
        };
        let z = cell(time_idx)?;
        let delta_raw = cell(event_idx)?;
        if delta_raw != 0.0 && delta_raw != 1.0 {
            return Err(MrlError::Row {
                row,
                message: format!("event indicator must be 0 or 1, got {delta_raw}"),
            });
        }
        let x: Vec<f64> = cov_idx.iter().map(|&i| cell(i)).collect::<Result<_>>()?;
        if !(z.is_finite() && z > 0.0) {
            return Err(MrlError::Row {
                row,
                message: format!("observed time must be finite and positive, got {z}"),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MrlError::Row {
                row,
                message: "covariates contain a non-finite entry".into(),
            });
        }
        records.push(SurvivalRecord {
            x,
            z,
            delta: delta_raw as u8,
        });
    }
    Dataset::new(records)
}

/// Write a dataset back out under the same schema. Values are formatted with
/// Rust's shortest round-trip float representation, so `load_dataset` of the
/// written file reproduces the dataset exactly.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset, schema: &CsvSchema) -> Result<()> {
    if schema.covariates.len() != dataset.p() {
        return Err(MrlError::Schema(format!(
            "schema names {} covariates, dataset has {}",
            schema.covariates.len(),
            dataset.p()
        )));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec![schema.time.clone(), schema.event.clone()];
    header.extend(schema.covariates.iter().cloned());
    writer.write_record(&header)?;
    for r in dataset.records() {
        let mut row = vec![format!("{}", r.z), format!("{}", r.delta)];
        row.extend(r.x.iter().map(|v| format!("{v}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(vec![
            SurvivalRecord::new(vec![0.5], 1.0, 1).unwrap(),
            SurvivalRecord::new(vec![-1.0], 2.0, 0).unwrap(),
            SurvivalRecord::new(vec![2.0], 3.0, 1).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn csv_readback() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "z,d,x1\n1,1,0.5\n2,0,-1\n3,1,2\n").unwrap();
        let schema = CsvSchema {
            time: "z".into(),
            event: "d".into(),
            covariates: vec!["x1".into()],
        };
        let ds = load_dataset(&path, &schema).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 1);
        assert_eq!(ds.tau(), 3.0);
        assert_eq!(ds.ordered_event_times(), &[1.0, 3.0]);
        assert_eq!(ds.n_events(), 2);
    }

    #[test]
    fn empty_data_section_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "z,d,x1\n").unwrap();
        let schema = CsvSchema {
            time: "z".into(),
            event: "d".into(),
            covariates: vec!["x1".into()],
        };
        assert!(matches!(
            load_dataset(&path, &schema),
            Err(MrlError::NoRecords)
        ));
    }

    #[test]
    fn bad_delta_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "z,d,x1\n1,1,0.5\n2,2,-1\n").unwrap();
        let schema = CsvSchema {
            time: "z".into(),
            event: "d".into(),
            covariates: vec!["x1".into()],
        };
        match load_dataset(&path, &schema) {
            Err(MrlError::Row { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cols.csv");
        std::fs::write(&path, "time,d,x1\n1,1,0.5\n").unwrap();
        let schema = CsvSchema {
            time: "z".into(),
            event: "d".into(),
            covariates: vec!["x1".into()],
        };
        assert!(matches!(
            load_dataset(&path, &schema),
            Err(MrlError::Schema(_))
        ));
    }

    #[test]
    fn at_risk_definition() {
        let ds = toy();
        assert_eq!(ds.at_risk(2.0).unwrap(), vec![0, 1, 1]);
        assert_eq!(ds.at_risk(0.0).unwrap(), vec![1, 1, 1]);
        assert_eq!(ds.at_risk(ds.tau() + 1.0).unwrap(), vec![0, 0, 0]);
        assert!(ds.at_risk(-0.1).is_err());
    }

    #[test]
    fn at_risk_nonincreasing_in_t() {
        let ds = toy();
        let mut prev = ds.at_risk(0.0).unwrap();
        for k in 1..40 {
            let cur = ds.at_risk(0.1 * k as f64).unwrap();
            for (a, b) in prev.iter().zip(&cur) {
                assert!(b <= a);
            }
            prev = cur;
        }
    }

    #[test]
    fn write_load_round_trip() {
        let ds = toy();
        let schema = CsvSchema {
            time: "z".into(),
            event: "d".into(),
            covariates: vec!["x1".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_dataset(&path, &ds, &schema).unwrap();
        let back = load_dataset(&path, &schema).unwrap();
        assert_eq!(back.records(), ds.records());
    }
}
