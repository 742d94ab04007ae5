//! Observational dataset: covariate matrix `X` (n x p), continuous (or
//! count) treatment `A`, and outcome `Y`, with validation and CSV I/O.
//!
//! CSV layout: a header row names every column; the treatment and outcome
//! columns are designated by name, and every remaining column is a covariate
//! in file order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Validated observational data.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    a: Array1<f64>,
    y: Array1<f64>,
    covariate_names: Vec<String>,
    treatment_name: String,
    outcome_name: String,
}

impl Dataset {
    /// Build a dataset with default column names (`x1..xp`, `a`, `y`).
    pub fn new(x: Array2<f64>, a: Array1<f64>, y: Array1<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, a, y, names, "a".into(), "y".into())
    }

    /// Build a dataset with explicit column names.
    pub fn with_names(
        x: Array2<f64>,
        a: Array1<f64>,
        y: Array1<f64>,
        covariate_names: Vec<String>,
        treatment_name: String,
        outcome_name: String,
    ) -> Result<Self> {
        if covariate_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} covariate columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        let data = Self {
            x,
            a,
            y,
            covariate_names,
            treatment_name,
            outcome_name,
        };
        data.validate()?;
        Ok(data)
    }

    /// Check the structural invariants: at least two rows, at least one
    /// covariate, equal lengths, and no non-finite entries. Errors name the
    /// offending field and position.
    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        if n < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        if self.x.ncols() < 1 {
            return Err(Error::InvalidDataset("need at least 1 covariate".into()));
        }
        if self.a.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "treatment has length {} but X has {} rows",
                self.a.len(),
                n
            )));
        }
        if self.y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcome has length {} but X has {} rows",
                self.y.len(),
                n
            )));
        }
        for ((i, j), v) in self.x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "X",
                    location: format!("({i}, {j})"),
                });
            }
        }
        for (i, v) in self.a.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "A",
                    location: format!("{i}"),
                });
            }
        }
        for (i, v) in self.y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "Y",
                    location: format!("{i}"),
                });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Row-gathered copy (bootstrap resampling). Indices may repeat; each
    /// must be a valid row.
    pub fn subsample(&self, indices: &[usize]) -> Result<Self> {
        let n = indices.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 rows, got {n}"
            )));
        }
        let p = self.p();
        let mut x = Array2::<f64>::zeros((n, p));
        let mut a = Array1::<f64>::zeros(n);
        let mut y = Array1::<f64>::zeros(n);
        for (row, &idx) in indices.iter().enumerate() {
            if idx >= self.n() {
                return Err(Error::DimensionMismatch(format!(
                    "resample index {idx} out of range for {} rows",
                    self.n()
                )));
            }
            x.row_mut(row).assign(&self.x.row(idx));
            a[row] = self.a[idx];
            y[row] = self.y[idx];
        }
        Ok(Self {
            x,
            a,
            y,
            covariate_names: self.covariate_names.clone(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        })
    }

    /// Read a dataset from CSV. The header row must contain `treatment` and
    /// `outcome`; every other column becomes a covariate in file order.
    pub fn from_csv_reader<R: Read>(reader: R, treatment: &str, outcome: &str) -> Result<Self> {
        if treatment == outcome {
            return Err(Error::InvalidDataset(format!(
                "treatment and outcome refer to the same column '{treatment}'"
            )));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let a_col = headers.iter().position(|h| h == treatment).ok_or_else(|| {
            Error::InvalidDataset(format!("treatment column '{treatment}' not found in header"))
        })?;
        let y_col = headers.iter().position(|h| h == outcome).ok_or_else(|| {
            Error::InvalidDataset(format!("outcome column '{outcome}' not found in header"))
        })?;
        let cov_cols: Vec<usize> = (0..headers.len())
            .filter(|&j| j != a_col && j != y_col)
            .collect();
        if cov_cols.is_empty() {
            return Err(Error::InvalidDataset(
                "no covariate columns remain after removing treatment and outcome".into(),
            ));
        }

        let mut x_rows: Vec<f64> = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {} has {} fields, header has {}",
                    row_idx + 1,
                    record.len(),
                    headers.len()
                )));
            }
            let parse = |j: usize| -> Result<f64> {
                record[j].parse::<f64>().map_err(|_| {
                    Error::InvalidDataset(format!(
                        "row {}, column '{}': cannot parse '{}' as a number",
                        row_idx + 1,
                        headers[j],
                        &record[j]
                    ))
                })
            };
            for &j in &cov_cols {
                x_rows.push(parse(j)?);
            }
            a.push(parse(a_col)?);
            y.push(parse(y_col)?);
        }

        let n = a.len();
        let p = cov_cols.len();
        let x = Array2::from_shape_vec((n, p), x_rows)
            .map_err(|e| Error::InvalidDataset(format!("covariate matrix shape: {e}")))?;
        Self::with_names(
            x,
            Array1::from_vec(a),
            Array1::from_vec(y),
            cov_cols.iter().map(|&j| headers[j].clone()).collect(),
            treatment.to_string(),
            outcome.to_string(),
        )
    }

    /// Read a dataset from a CSV file on disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P, treatment: &str, outcome: &str) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, treatment, outcome)
    }

    /// Write the dataset as CSV: covariates first, then treatment and outcome.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.covariate_names.iter().map(|s| s.as_str()).collect();
        header.push(&self.treatment_name);
        header.push(&self.outcome_name);
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut record: Vec<String> = Vec::with_capacity(self.p() + 2);
            for j in 0..self.p() {
                record.push(format!("{}", self.x[[i, j]]));
            }
            record.push(format!("{}", self.a[i]));
            record.push(format!("{}", self.y[i]));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Per-column location/scale transform fitted on a dataset, applied to the
/// covariates and the treatment axis before any distance computation (the
/// treatment itself is never standardized for policy evaluation, only inside
/// the distance geometry).
#[derive(Debug, Clone)]
pub struct Standardizer {
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    a_mean: f64,
    a_scale: f64,
}

impl Standardizer {
    /// Fit means and sample standard deviations; columns with (numerically)
    /// zero spread keep scale 1 so they pass through centered.
    pub fn fit(data: &Dataset) -> Self {
        let n = data.n();
        let col_stats = |col: ArrayView1<'_, f64>| -> (f64, f64) {
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            let scale = if sd <= 1e-12 * (1.0 + mean.abs()) {
                1.0
            } else {
                sd
            };
            (mean, scale)
        };
        let mut x_mean = Vec::with_capacity(data.p());
        let mut x_scale = Vec::with_capacity(data.p());
        for j in 0..data.p() {
            let (m, s) = col_stats(data.x().column(j));
            x_mean.push(m);
            x_scale.push(s);
        }
        let (a_mean, a_scale) = col_stats(data.a());
        Self {
            x_mean,
            x_scale,
            a_mean,
            a_scale,
        }
    }

    /// Identity transform (used when standardization is disabled).
    pub fn identity(p: usize) -> Self {
        Self {
            x_mean: vec![0.0; p],
            x_scale: vec![1.0; p],
            a_mean: 0.0,
            a_scale: 1.0,
        }
    }

    pub fn transform_x_entry(&self, j: usize, v: f64) -> f64 {
        (v - self.x_mean[j]) / self.x_scale[j]
    }

    /// Transform a value living on the treatment axis (observed or shifted).
    pub fn transform_a(&self, v: f64) -> f64 {
        (v - self.a_mean) / self.a_scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> Dataset {
        Dataset::new(
            array![[1.0, 0.0], [2.0, 1.0], [3.0, 0.0]],
            array![10.0, 11.0, 12.0],
            array![0.5, 0.7, 0.9],
        )
        .unwrap()
    }

    #[test]
    fn valid_dataset_passes() {
        assert!(small().validate().is_ok());
    }

    #[test]
    fn nan_in_outcome_names_field_and_index() {
        let err = Dataset::new(
            array![[1.0], [2.0], [3.0], [4.0]],
            array![0.0, 0.0, 0.0, 0.0],
            array![1.0, 2.0, 3.0, f64::NAN],
        )
        .unwrap_err();
        match err {
            Error::NonFinite { field, location } => {
                assert_eq!(field, "Y");
                assert_eq!(location, "3");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn infinity_in_x_names_position() {
        let err = Dataset::new(
            array![[1.0, f64::INFINITY], [2.0, 0.0]],
            array![0.0, 0.0],
            array![1.0, 2.0],
        )
        .unwrap_err();
        assert!(err.to_string().contains("X"));
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = Dataset::new(
            array![[1.0], [2.0]],
            array![0.0, 0.0, 0.0],
            array![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn single_row_is_rejected() {
        let err = Dataset::new(array![[1.0]], array![0.0], array![1.0]).unwrap_err();
        assert!(err.to_string().contains("at least 2 rows"));
    }

    #[test]
    fn csv_roundtrip_preserves_values_and_names() {
        let data = small();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), "a", "y").unwrap();
        assert_eq!(back.n(), 3);
        assert_eq!(back.p(), 2);
        assert_eq!(back.covariate_names(), data.covariate_names());
        assert_eq!(back.x(), data.x());
        assert_eq!(back.a(), data.a());
        assert_eq!(back.y(), data.y());
    }

    #[test]
    fn csv_ingestion_respects_column_designation() {
        let csv_text = "dose,age,bmi,response\n1.0,50,22.5,3.1\n2.0,61,27.0,2.4\n";
        let data = Dataset::from_csv_reader(csv_text.as_bytes(), "dose", "response").unwrap();
        assert_eq!(data.covariate_names(), ["age", "bmi"]);
        assert_eq!(data.a()[1], 2.0);
        assert_eq!(data.y()[0], 3.1);
        assert_eq!(data.x()[[1, 0]], 61.0);
    }

    #[test]
    fn csv_missing_column_is_named() {
        let csv_text = "a,y,x1\n1,2,3\n4,5,6\n";
        let err = Dataset::from_csv_reader(csv_text.as_bytes(), "dose", "y").unwrap_err();
        assert!(err.to_string().contains("dose"));
    }

    #[test]
    fn csv_bad_cell_reports_row_and_column() {
        let csv_text = "x1,a,y\n1.0,2.0,3.0\n1.5,oops,4.0\n";
        let err = Dataset::from_csv_reader(csv_text.as_bytes(), "a", "y").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("'a'"), "{msg}");
    }

    #[test]
    fn subsample_gathers_rows() {
        let data = small();
        let sub = data.subsample(&[2, 0, 2]).unwrap();
        assert_eq!(sub.a().to_vec(), vec![12.0, 10.0, 12.0]);
        assert_eq!(sub.x()[[1, 0]], 1.0);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let data = small();
        let s = Standardizer::fit(&data);
        // Column 0 of X is {1,2,3}: mean 2, sd 1.
        assert!((s.transform_x_entry(0, 2.0)).abs() < 1e-12);
        assert!((s.transform_x_entry(0, 3.0) - 1.0).abs() < 1e-12);
        // Treatment {10,11,12}: mean 11, sd 1.
        assert!((s.transform_a(12.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardizer_constant_column_passes_through_centered() {
        let data = Dataset::new(
            array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]],
            array![0.0, 1.0, 2.0],
            array![0.0, 0.0, 0.0],
        )
        .unwrap();
        let s = Standardizer::fit(&data);
        assert_eq!(s.transform_x_entry(0, 5.0), 0.0);
    }
}
