//! CSV loading and sample moments.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read data: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(String),
    /// Row is the 1-based data row (header excluded), column is 1-based.
    #[error("cannot parse `{token}` as a number at row {row}, column {column}")]
    Parse { row: usize, column: usize, token: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("need at least 3 complete rows, found {0}")]
    TooFewRows(usize),
    #[error("column `{0}` has zero variance")]
    DegenerateColumn(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for DataError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            other => DataError::Csv(format!("{other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Listwise,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub missing_markers: Vec<String>,
    pub policy: MissingPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing_markers: vec![String::new(), "NA".into(), "NaN".into()],
            policy: MissingPolicy::Listwise,
        }
    }
}

/// A complete numeric table, `n × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    /// Rows removed by the missing-data policy.
    pub rows_dropped: usize,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: DMatrix<f64>) -> Result<Self, DataError> {
        if columns.len() != values.ncols() {
            return Err(DataError::Header(format!(
                "{} names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        check_header(&columns)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Csv("non-finite value in dataset".into()));
        }
        if values.nrows() < 3 {
            return Err(DataError::TooFewRows(values.nrows()));
        }
        Ok(Self { columns, values, rows_dropped: 0 })
    }

    /// Build from named columns of equal length.
    pub fn from_columns(cols: Vec<(String, Vec<f64>)>) -> Result<Self, DataError> {
        let n = cols.first().map(|c| c.1.len()).unwrap_or(0);
        if let Some((name, c)) = cols.iter().find(|c| c.1.len() != n) {
            return Err(DataError::Header(format!("column `{name}` has {} rows, expected {n}", c.len())));
        }
        let p = cols.len();
        let values = DMatrix::from_fn(n, p, |i, j| cols[j].1[i]);
        Self::new(cols.into_iter().map(|c| c.0).collect(), values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>, DataError> {
        Ok(self.values.column(self.column_index(name)?).into_owned())
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let values = self.values.select_rows(rows.iter());
        Dataset { columns: self.columns.clone(), values, rows_dropped: 0 }
    }
}

fn check_header(columns: &[String]) -> Result<(), DataError> {
    for (i, c) in columns.iter().enumerate() {
        if c.trim().is_empty() {
            return Err(DataError::Header(format!("column {} has an empty name", i + 1)));
        }
        if columns[..i].contains(c) {
            return Err(DataError::Header(format!("duplicate column name `{c}`")));
        }
    }
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, options)
}

/// Parse CSV from any reader; see [`load_csv`].
pub fn read_csv<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let columns: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if columns.is_empty() {
        return Err(DataError::Header("empty header".into()));
    }
    check_header(&columns)?;
    let p = columns.len();

    let mut data: Vec<f64> = Vec::new();
    let mut kept = 0usize;
    let mut dropped = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != p {
            return Err(DataError::RaggedRow { row, found: record.len(), expected: p });
        }
        let mut parsed = Vec::with_capacity(p);
        let mut missing = false;
        for (col, field) in record.iter().enumerate() {
            let token = field.trim();
            if options.missing_markers.iter().any(|m| m == token) {
                missing = true;
                continue;
            }
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    return Err(DataError::Parse { row, column: col + 1, token: token.to_string() });
                }
            }
        }
        match options.policy {
            MissingPolicy::Listwise if missing => dropped += 1,
            MissingPolicy::Listwise => {
                data.extend(parsed);
                kept += 1;
            }
        }
    }
    if kept < 3 {
        return Err(DataError::TooFewRows(kept));
    }
    let values = DMatrix::from_row_slice(kept, p, &data);
    Ok(Dataset { columns, values, rows_dropped: dropped })
}

/// Means and unbiased (n − 1) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub columns: Vec<String>,
    pub means: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
    /// Columns whose variance is exactly zero.
    pub degenerate: Vec<String>,
}

impl SampleMoments {
    /// Moments restricted to `names`, in that order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<SampleMoments, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n.as_ref())
                    .ok_or_else(|| DataError::MissingColumn(n.as_ref().to_string()))
            })
            .collect::<Result<_, _>>()?;
        let k = idx.len();
        let cov = DMatrix::from_fn(k, k, |i, j| self.cov[(idx[i], idx[j])]);
        let means = DVector::from_fn(k, |i, _| self.means[idx[i]]);
        let columns: Vec<String> = idx.iter().map(|&i| self.columns[i].clone()).collect();
        let degenerate = columns.iter().filter(|c| self.degenerate.contains(c)).cloned().collect();
        Ok(SampleMoments { columns, means, cov, n: self.n, degenerate })
    }

    /// Build directly from a covariance matrix (means taken as zero).
    pub fn from_covariance(columns: Vec<String>, cov: DMatrix<f64>, n: usize) -> Self {
        let p = cov.nrows();
        let degenerate = (0..p).filter(|&i| cov[(i, i)] == 0.0).map(|i| columns[i].clone()).collect();
        SampleMoments { columns, means: DVector::zeros(p), cov, n, degenerate }
    }
}

/// Two-pass mean-then-deviation moments.
pub fn compute_moments(data: &Dataset) -> SampleMoments {
    let n = data.n();
    let p = data.values.ncols();
    let means = DVector::from_fn(p, |j, _| data.values.column(j).sum() / n as f64);
    let mut centered = data.values.clone();
    for j in 0..p {
        let m = means[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    // exact symmetry
    for i in 0..p {
        for j in 0..i {
            let v = cov[(i, j)];
            cov[(j, i)] = v;
        }
    }
    let degenerate = (0..p).filter(|&j| cov[(j, j)] == 0.0).map(|j| data.columns[j].clone()).collect();
    SampleMoments { columns: data.columns.clone(), means, cov, n, degenerate }
}

/// As [`compute_moments`] but fails on a zero-variance column.
pub fn compute_moments_strict(data: &Dataset) -> Result<SampleMoments, DataError> {
    let m = compute_moments(data);
    match m.degenerate.first() {
        Some(name) => Err(DataError::DegenerateColumn(name.clone())),
        None => Ok(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Dataset, DataError> {
        read_csv(text.as_bytes(), &CsvOptions::default())
    }

    #[test]
    fn three_by_three() {
        let d = read("x,m,y\n1,2,3\n4,5,6\n7,8,10\n").unwrap();
        assert_eq!(d.columns, ["x", "m", "y"]);
        assert_eq!(d.n(), 3);
        assert_eq!(d.values[(2, 2)], 10.0);
    }

    #[test]
    fn parse_error_location() {
        match read("x,m,y\n1,2,3\nabc,5,6\n7,8,9\n") {
            Err(DataError::Parse { row, column, token }) => {
                assert_eq!((row, column, token.as_str()), (2, 1, "abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn listwise_deletion() {
        let d = read("x,y\n1,2\nNA,3\n2,4\n3,\n5,1\n").unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.rows_dropped, 2);
    }

    #[test]
    fn header_and_row_count_errors() {
        assert!(matches!(read("x,x\n1,2\n3,4\n5,6\n"), Err(DataError::Header(_))));
        assert!(matches!(read("x,\n1,2\n3,4\n5,6\n"), Err(DataError::Header(_))));
        assert!(matches!(read("x,y\n1,2\n3,4\n"), Err(DataError::TooFewRows(2))));
        assert!(matches!(read("x,y\n1,2\n3\n"), Err(DataError::RaggedRow { row: 2, .. })));
    }

    #[test]
    fn semicolon_delimiter() {
        let opts = CsvOptions { delimiter: b';', ..Default::default() };
        let d = read_csv("a;b\n1;2\n2;3\n3;5\n".as_bytes(), &opts).unwrap();
        assert_eq!(d.values[(2, 1)], 5.0);
    }

    #[test]
    fn simple_moments() {
        let d = Dataset::from_columns(vec![
            ("a".into(), vec![1.0, 2.0, 3.0]),
            ("b".into(), vec![1.0, 2.0, 3.0]),
            ("c".into(), vec![4.0, 4.0, 4.0]),
        ])
        .unwrap();
        let m = compute_moments(&d);
        assert_eq!(m.means[0], 2.0);
        assert_eq!(m.cov[(0, 0)], 1.0);
        assert_eq!(m.cov[(0, 1)], m.cov[(0, 0)]);
        let corr = m.cov[(0, 1)] / (m.cov[(0, 0)] * m.cov[(1, 1)]).sqrt();
        assert_eq!(corr, 1.0);
        assert_eq!(m.cov[(2, 2)], 0.0);
        assert_eq!(m.degenerate, ["c"]);
        assert!(matches!(compute_moments_strict(&d), Err(DataError::DegenerateColumn(c)) if c == "c"));
    }

    #[test]
    fn subset_reorders() {
        let d = Dataset::from_columns(vec![
            ("a".into(), vec![1.0, 2.0, 4.0]),
            ("b".into(), vec![0.0, 5.0, 1.0]),
        ])
        .unwrap();
        let m = compute_moments(&d);
        let s = m.subset(&["b", "a"]).unwrap();
        assert_eq!(s.cov[(0, 0)], m.cov[(1, 1)]);
        assert_eq!(s.cov[(0, 1)], m.cov[(1, 0)]);
        assert!(matches!(m.subset(&["z"]), Err(DataError::MissingColumn(_))));
    }
}
