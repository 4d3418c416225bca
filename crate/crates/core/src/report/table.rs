use std::path::Path;

use crate::error::{Error, Result};

/// Kind of a table column; integers print without an exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Real,
    Integer,
}

/// Numeric table with a header, written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, ColumnKind)>,
    pub rows: Vec<Vec<f64>>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn new(columns: &[(&str, ColumnKind)]) -> Self {
        Table {
            columns: columns.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|(n, _)| n == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for row in &self.rows {
            w.write_record(
                row.iter()
                    .zip(&self.columns)
                    .map(|(v, (_, kind))| match kind {
                        ColumnKind::Integer => format!("{}", *v as i64),
                        ColumnKind::Real => format_real(*v),
                    }),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Parses CSV written by [`Table::to_csv`]. Column kinds are recovered
    /// from `kinds`, which must match the header length.
    pub fn from_csv(text: &str, kinds: &[ColumnKind], origin: &Path) -> Result<Self> {
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            reason,
        };
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() != kinds.len() {
            return Err(parse_err(format!(
                "expected {} columns, found {}",
                kinds.len(),
                header.len()
            )));
        }
        let mut table = Table {
            columns: header.into_iter().zip(kinds.iter().copied()).collect(),
            rows: Vec::new(),
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("row {}: bad number `{s}`", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != kinds.len() {
                return Err(parse_err(format!("row {} has {} fields", i + 1, row.len())));
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}
