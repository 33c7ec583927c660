//! Space-time data matrix and its CSV form.
//!
//! The CSV layout has a header row with one cell per site holding the site
//! coordinates joined by `:` (e.g. `3` on a line, `12:4` on a grid), followed
//! by one row per time point. Values are written with the shortest decimal
//! representation that parses back to the identical `f64`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse '{text}' as a number")]
    Parse {
        row: usize,
        column: usize,
        text: String,
    },
    #[error("header column {column}: cannot parse site coordinate '{text}'")]
    Header { column: usize, text: String },
    #[error("row {row}, column {column}: missing or non-finite value")]
    Missing { row: usize, column: usize },
    #[error("data has no rows or no columns")]
    Empty,
    #[error("{values} columns but {sites} site coordinates")]
    SiteMismatch { values: usize, sites: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeData {
    /// `T x S`, one row per time point.
    pub values: DMatrix<f64>,
    pub sites: Vec<Vec<f64>>,
    /// Label of the first time point. Trends are evaluated on row numbers
    /// `1..=T` regardless of this label.
    pub t0: i64,
}

impl SpaceTimeData {
    pub fn new(values: DMatrix<f64>, sites: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let d = Self {
            values,
            sites,
            t0: 1,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n_times(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.values.ncols()
    }

    pub fn series(&self, site: usize) -> Vec<f64> {
        self.values.column(site).iter().copied().collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.values.nrows() == 0 || self.values.ncols() == 0 {
            return Err(DataError::Empty);
        }
        if self.values.ncols() != self.sites.len() {
            return Err(DataError::SiteMismatch {
                values: self.values.ncols(),
                sites: self.sites.len(),
            });
        }
        for r in 0..self.values.nrows() {
            for c in 0..self.values.ncols() {
                if !self.values[(r, c)].is_finite() {
                    return Err(DataError::Missing { row: r + 1, column: c });
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        write_matrix_csv(w, &self.sites, &self.values)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DataError> {
        let (sites, values) = read_matrix_csv(r)?;
        Self::new(values, sites)
    }
}

pub(crate) fn site_label(site: &[f64]) -> String {
    site.iter()
        .map(|c| format!("{c}"))
        .collect::<Vec<_>>()
        .join(":")
}

/// Writes a matrix with site-coordinate headers. Used for data and for
/// recorded innovations.
pub fn write_matrix_csv<W: Write>(
    w: W,
    sites: &[Vec<f64>],
    values: &DMatrix<f64>,
) -> Result<(), DataError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(sites.iter().map(|s| site_label(s)))?;
    for row in values.row_iter() {
        wr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<Vec<f64>>, DMatrix<f64>), DataError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rd.headers()?.clone();
    let sites: Vec<Vec<f64>> = header
        .iter()
        .enumerate()
        .map(|(column, text)| {
            text.split(':')
                .map(|c| c.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| DataError::Header {
                    column,
                    text: text.to_string(),
                })
        })
        .collect::<Result<_, _>>()?;
    let s = sites.len();
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in rd.records().enumerate() {
        // Line 1 is the header.
        let row = i + 2;
        let rec = rec?;
        if rec.len() != s {
            return Err(DataError::RowLength {
                row,
                expected: s,
                found: rec.len(),
            });
        }
        for (column, text) in rec.iter().enumerate() {
            if text.is_empty() || text.eq_ignore_ascii_case("na") || text.eq_ignore_ascii_case("nan") {
                return Err(DataError::Missing { row, column });
            }
            let v: f64 = text.parse().map_err(|_| DataError::Parse {
                row,
                column,
                text: text.to_string(),
            })?;
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 || s == 0 {
        return Err(DataError::Empty);
    }
    Ok((sites, DMatrix::from_row_slice(rows, s, &flat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 12),
        ) {
            let m = DMatrix::from_row_slice(4, 3, &vals);
            let d = SpaceTimeData::new(m, vec![vec![0.0, 1.5], vec![1.0, 1.5], vec![2.0, -0.25]]).unwrap();
            let mut buf = Vec::new();
            d.write_csv(&mut buf).unwrap();
            let back = SpaceTimeData::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.sites, d.sites);
            for (a, b) in back.values.iter().zip(d.values.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn malformed_row_is_named() {
        let text = "0,1\n1.0,2.0\n3.0,abc\n";
        match SpaceTimeData::read_csv(text.as_bytes()) {
            Err(DataError::Parse { row, column, .. }) => {
                assert_eq!((row, column), (3, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "0,1\n1.0,2.0\n3.0\n";
        assert!(matches!(
            SpaceTimeData::read_csv(text.as_bytes()),
            Err(DataError::RowLength { row: 3, .. })
        ));
        let text = "0,1\n1.0,NA\n";
        assert!(matches!(
            SpaceTimeData::read_csv(text.as_bytes()),
            Err(DataError::Missing { row: 2, column: 1 })
        ));
    }
}
