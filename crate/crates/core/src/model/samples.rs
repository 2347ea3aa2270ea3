use std::io::Read;
use std::path::Path;

use crate::error::{PreError, Result};

/// `n x d` matrix of prior draws, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSampleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl PriorSampleSet {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| PreError::InvalidInput("prior sample set needs at least one row".into()))?;
        let n = rows.len();
        let mut data = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(PreError::Csv {
                    row: i + 1,
                    message: format!("expected {d} columns, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        Self::from_flat(data, n, d)
    }

    pub fn from_flat(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(PreError::InvalidInput("prior sample set must be non-empty".into()));
        }
        if data.len() != n * d {
            return Err(PreError::DimensionMismatch {
                context: "prior sample buffer",
                expected: n * d,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PreError::Csv {
                row: pos / d + 1,
                message: "non-finite sample value".into(),
            });
        }
        Ok(Self { data, n, d })
    }

    /// Parses CSV: one sample per row, `d` numeric columns and an optional
    /// single header line. Rows are reported 1-based counting the header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let rows = read_numeric_csv(reader)?;
        Self::from_csv_rows(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| PreError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    fn from_csv_rows(rows: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        let d = rows
            .first()
            .map(|(_, r)| r.len())
            .ok_or_else(|| PreError::InvalidInput("CSV contains no data rows".into()))?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for (line, row) in &rows {
            if row.len() != d {
                return Err(PreError::Csv {
                    row: *line,
                    message: format!("expected {d} columns, found {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        let n = rows.len();
        Self::from_flat(data, n, d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Appends the rows of `other`.
    pub fn concat(&self, other: &PriorSampleSet) -> Result<Self> {
        if other.d != self.d {
            return Err(PreError::DimensionMismatch {
                context: "sample concatenation",
                expected: self.d,
                found: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::from_flat(data, self.n + other.n, self.d)
    }

    /// A new set with rows taken in the given order (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(PreError::InvalidInput(format!("row index {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::from_flat(data, indices.len(), self.d)
    }
}

/// Reads a headerless-or-single-header numeric CSV into `(line, values)` rows.
/// Blank lines are skipped. A first line that does not parse as numbers is
/// taken as the header; any later unparsable field is an error naming its line.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| PreError::Csv {
            row: line,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push((line, values)),
            Err(_) if line == 1 => continue,
            Err(e) => {
                return Err(PreError::Csv {
                    row: line,
                    message: format!("unparsable value ({e})"),
                })
            }
        }
    }
    Ok(rows)
}

/// Reads a single-column numeric CSV (optional header).
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let rows = read_numeric_csv(reader)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.len() != 1 {
            return Err(PreError::Csv {
                row: line,
                message: format!("expected a single column, found {}", row.len()),
            });
        }
        if !row[0].is_finite() {
            return Err(PreError::Csv {
                row: line,
                message: "non-finite value".into(),
            });
        }
        out.push(row[0]);
    }
    if out.is_empty() {
        return Err(PreError::InvalidInput("series CSV contains no values".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_and_without_header() {
        let a = PriorSampleSet::from_csv_reader("x1,x2\n1,2\n3,4\n".as_bytes()).unwrap();
        let b = PriorSampleSet::from_csv_reader("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn ragged_rows_rejected_with_line() {
        let err = PriorSampleSet::from_csv_reader("a,b\n1,2\n3\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            PreError::Csv {
                row: 3,
                message: "expected 2 columns, found 1".into()
            }
        );
    }

    #[test]
    fn garbage_after_header_rejected() {
        let err = PriorSampleSet::from_csv_reader("1,2\nfoo,4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, PreError::Csv { row: 2, .. }));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(PriorSampleSet::from_rows(vec![vec![1.0], vec![f64::NAN]]).is_err());
        assert!(PriorSampleSet::from_csv_reader("1\ninf\n".as_bytes()).is_err());
    }

    #[test]
    fn series_single_column() {
        let s = read_series_csv("value\n1.5\n-2\n".as_bytes()).unwrap();
        assert_eq!(s, vec![1.5, -2.0]);
        assert!(read_series_csv("1,2\n".as_bytes()).is_err());
    }
}
