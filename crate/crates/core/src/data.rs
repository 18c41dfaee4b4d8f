//! Survey datasets: categorical exposures, a binary outcome, numeric covariates
//! and the design columns (weight, stratum, cluster).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample drawn under a (possibly complex) survey design.
///
/// Item codes are stored as read, 1-based in `1..=item_levels[j]`. Matrices are
/// row-major with one row per individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub n: usize,
    pub n_items: usize,
    pub items: Vec<u32>,
    pub outcome: Vec<u8>,
    pub n_covariates: usize,
    pub covariates: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub weight: Vec<f64>,
    pub stratum: Vec<i64>,
    pub cluster: Vec<i64>,
    pub item_levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Shape { message: String },
    ItemOutOfRange { row: usize, item: usize, code: u32, levels: usize },
    OutcomeNotBinary { row: usize, value: u8 },
    NonPositiveWeight { row: usize, value: f64 },
    NonFiniteCovariate { row: usize, column: usize },
    ClusterSpansStrata { cluster: i64, strata: Vec<i64> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { message } => write!(f, "shape: {message}"),
            Violation::ItemOutOfRange { row, item, code, levels } => write!(
                f,
                "row {}: item_{} has code {code} outside 1..={levels}",
                row + 1,
                item + 1
            ),
            Violation::OutcomeNotBinary { row, value } => {
                write!(f, "row {}: outcome {value} is not 0/1", row + 1)
            }
            Violation::NonPositiveWeight { row, value } => {
                write!(f, "row {}: weight {value} is not a positive finite number", row + 1)
            }
            Violation::NonFiniteCovariate { row, column } => {
                write!(f, "row {}: covariate {} is not finite", row + 1, column + 1)
            }
            Violation::ClusterSpansStrata { cluster, strata } => {
                write!(f, "cluster {cluster} appears in strata {strata:?}")
            }
        }
    }
}

/// Every invariant violation found in a dataset. Empty iff the dataset is valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

const DESIGN_COLUMNS: [&str; 4] = ["y", "weight", "stratum", "cluster"];

impl SurveyDataset {
    #[inline]
    pub fn item(&self, i: usize, j: usize) -> u32 {
        self.items[i * self.n_items + j]
    }

    #[inline]
    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let p = self.n_covariates;
        &self.covariates[i * p..(i + 1) * p]
    }

    /// Checks every dataset invariant and reports all violations rather than the first.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let n = self.n;
        let shape = |what: &str, got: usize, want: usize| Violation::Shape {
            message: format!("{what} has length {got}, expected {want}"),
        };
        if n == 0 {
            out.push(Violation::Shape { message: "dataset has no rows".into() });
        }
        if self.n_items == 0 {
            out.push(Violation::Shape { message: "dataset has no item columns".into() });
        }
        let checks = [
            ("items", self.items.len(), n * self.n_items),
            ("outcome", self.outcome.len(), n),
            ("covariates", self.covariates.len(), n * self.n_covariates),
            ("covariate_names", self.covariate_names.len(), self.n_covariates),
            ("weight", self.weight.len(), n),
            ("stratum", self.stratum.len(), n),
            ("cluster", self.cluster.len(), n),
            ("item_levels", self.item_levels.len(), self.n_items),
        ];
        for (what, got, want) in checks {
            if got != want {
                out.push(shape(what, got, want));
            }
        }
        if !out.is_empty() {
            return ValidationReport { violations: out };
        }

        for (j, &r) in self.item_levels.iter().enumerate() {
            if r < 2 {
                out.push(Violation::Shape {
                    message: format!("item_{} declares {r} levels; at least 2 required", j + 1),
                });
            }
        }
        for i in 0..n {
            for j in 0..self.n_items {
                let code = self.item(i, j);
                let levels = self.item_levels[j];
                if code < 1 || code as usize > levels {
                    out.push(Violation::ItemOutOfRange { row: i, item: j, code, levels });
                }
            }
            if self.outcome[i] > 1 {
                out.push(Violation::OutcomeNotBinary { row: i, value: self.outcome[i] });
            }
            let w = self.weight[i];
            if !(w.is_finite() && w > 0.0) {
                out.push(Violation::NonPositiveWeight { row: i, value: w });
            }
            for (c, v) in self.covariate_row(i).iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation::NonFiniteCovariate { row: i, column: c });
                }
            }
        }

        let mut cluster_strata: HashMap<i64, Vec<i64>> = HashMap::new();
        for (&cl, &st) in self.cluster.iter().zip(&self.stratum) {
            let strata = cluster_strata.entry(cl).or_default();
            if !strata.contains(&st) {
                strata.push(st);
            }
        }
        let mut spanning: Vec<_> = cluster_strata
            .into_iter()
            .filter(|(_, s)| s.len() > 1)
            .collect();
        spanning.sort_by_key(|(c, _)| *c);
        for (cluster, mut strata) in spanning {
            strata.sort_unstable();
            out.push(Violation::ClusterSpansStrata { cluster, strata });
        }
        ValidationReport { violations: out }
    }

    /// Fails with [`Error::Validation`] when any invariant is violated.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(report))
        }
    }

    /// Same data with every outcome replaced; handy for checks that the
    /// unsupervised step ignores the outcome.
    pub fn with_outcome(&self, outcome: Vec<u8>) -> Self {
        SurveyDataset { outcome, ..self.clone() }
    }

    pub fn n_strata(&self) -> usize {
        let mut s = self.stratum.clone();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    pub fn n_clusters(&self) -> usize {
        let mut c = self.cluster.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Reads the CSV layout `item_1..item_J, y, weight, stratum, cluster, <covariates...>`.
    ///
    /// Columns are matched by header name; any column that is neither an item
    /// nor a design column is a covariate, kept in file order. Item level counts
    /// are the largest code seen per item unless `item_levels` is supplied.
    pub fn read_csv(path: impl AsRef<Path>, item_levels: Option<&[usize]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        Self::from_reader(&mut rdr, item_levels)
    }

    pub fn from_csv_str(text: &str, item_levels: Option<&[usize]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        Self::from_reader(&mut rdr, item_levels)
    }

    fn from_reader<R: std::io::Read>(
        rdr: &mut csv::Reader<R>,
        item_levels: Option<&[usize]>,
    ) -> Result<Self> {
        let headers = rdr.headers()?.clone();
        let mut item_cols: Vec<(usize, usize)> = Vec::new();
        let mut design = [None; 4];
        let mut cov_cols = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            if let Some(num) = name.strip_prefix("item_").and_then(|s| s.parse::<usize>().ok()) {
                item_cols.push((num, idx));
            } else if let Some(d) = DESIGN_COLUMNS.iter().position(|c| *c == name) {
                design[d] = Some(idx);
            } else {
                cov_cols.push((name.to_string(), idx));
            }
        }
        item_cols.sort_unstable();
        for (expect, (num, _)) in item_cols.iter().enumerate() {
            if *num != expect + 1 {
                return Err(Error::invalid(format!(
                    "item columns must be item_1..item_J without gaps; found item_{num}"
                )));
            }
        }
        let mut missing: Vec<&str> = Vec::new();
        for (d, name) in design.iter().zip(DESIGN_COLUMNS) {
            if d.is_none() {
                missing.push(name);
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation(ValidationReport {
                violations: vec![Violation::Shape {
                    message: format!("missing required column(s): {}", missing.join(", ")),
                }],
            }));
        }
        let [y_col, w_col, s_col, c_col] = design.map(|d| d.unwrap());

        let n_items = item_cols.len();
        let p = cov_cols.len();
        let mut ds = SurveyDataset {
            n: 0,
            n_items,
            items: Vec::new(),
            outcome: Vec::new(),
            n_covariates: p,
            covariates: Vec::new(),
            covariate_names: cov_cols.iter().map(|(n, _)| n.clone()).collect(),
            weight: Vec::new(),
            stratum: Vec::new(),
            cluster: Vec::new(),
            item_levels: Vec::new(),
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |col: usize| -> Result<&str> {
                rec.get(col).filter(|s| !s.is_empty()).ok_or_else(|| {
                    Error::invalid(format!(
                        "row {}: missing value in column '{}'",
                        row + 1,
                        &headers[col]
                    ))
                })
            };
            let parse_err = |col: usize, v: &str| {
                Error::invalid(format!(
                    "row {}: cannot parse '{v}' in column '{}'",
                    row + 1,
                    &headers[col]
                ))
            };
            for &(_, col) in &item_cols {
                let v = field(col)?;
                ds.items.push(v.parse().map_err(|_| parse_err(col, v))?);
            }
            let v = field(y_col)?;
            ds.outcome.push(v.parse().map_err(|_| parse_err(y_col, v))?);
            let v = field(w_col)?;
            ds.weight.push(v.parse().map_err(|_| parse_err(w_col, v))?);
            let v = field(s_col)?;
            ds.stratum.push(v.parse().map_err(|_| parse_err(s_col, v))?);
            let v = field(c_col)?;
            ds.cluster.push(v.parse().map_err(|_| parse_err(c_col, v))?);
            for (_, col) in &cov_cols {
                let v = field(*col)?;
                ds.covariates.push(v.parse().map_err(|_| parse_err(*col, v))?);
            }
            ds.n += 1;
        }
        ds.item_levels = match item_levels {
            Some(levels) => levels.to_vec(),
            None => (0..n_items)
                .map(|j| {
                    (0..ds.n)
                        .map(|i| ds.item(i, j) as usize)
                        .max()
                        .unwrap_or(0)
                        .max(2)
                })
                .collect(),
        };
        Ok(ds)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.n_items).map(|j| format!("item_{j}")).collect();
        header.extend(DESIGN_COLUMNS.iter().map(|s| s.to_string()));
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = (0..self.n_items).map(|j| self.item(i, j).to_string()).collect();
            rec.push(self.outcome[i].to_string());
            rec.push(self.weight[i].to_string());
            rec.push(self.stratum[i].to_string());
            rec.push(self.cluster[i].to_string());
            rec.extend(self.covariate_row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy() -> SurveyDataset {
        SurveyDataset {
            n: 4,
            n_items: 2,
            items: vec![1, 2, 3, 4, 2, 2, 1, 1],
            outcome: vec![0, 1, 1, 0],
            n_covariates: 1,
            covariates: vec![0.0, 1.0, 0.0, 1.0],
            covariate_names: vec!["v".into()],
            weight: vec![1.0, 2.0, 3.0, 4.0],
            stratum: vec![1, 1, 2, 2],
            cluster: vec![10, 11, 20, 20],
            item_levels: vec![4, 4],
        }
    }

    #[test]
    fn valid_toy_has_empty_report() {
        assert!(toy().validate().is_empty());
    }

    #[test]
    fn out_of_range_code_names_row_and_column() {
        let mut ds = toy();
        ds.items[3] = 5;
        let report = ds.validate();
        assert_eq!(
            report.violations,
            vec![Violation::ItemOutOfRange { row: 1, item: 1, code: 5, levels: 4 }]
        );
    }

    #[test]
    fn cluster_spanning_strata_is_one_violation() {
        let mut ds = toy();
        ds.cluster = vec![7, 7, 7, 20];
        let report = ds.validate();
        assert_eq!(
            report.violations,
            vec![Violation::ClusterSpansStrata { cluster: 7, strata: vec![1, 2] }]
        );
    }

    #[test]
    fn zero_code_and_bad_weight_both_reported() {
        let mut ds = toy();
        ds.items[0] = 0;
        ds.weight[2] = 0.0;
        ds.outcome[3] = 2;
        assert_eq!(ds.validate().len(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let ds = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        ds.write_csv(&path).unwrap();
        let back = SurveyDataset::read_csv(&path, Some(&[4, 4])).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_missing_column_is_validation_error() {
        let text = "item_1,y,weight,stratum\n1,0,1.0,1\n";
        match SurveyDataset::from_csv_str(text, None) {
            Err(Error::Validation(r)) => assert_eq!(r.len(), 1),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn csv_missing_value_rejected() {
        let text = "item_1,y,weight,stratum,cluster\n1,,1.0,1,1\n";
        assert!(matches!(
            SurveyDataset::from_csv_str(text, None),
            Err(Error::InvalidInput(_))
        ));
    }
}
