use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed samples, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    p: usize,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>], column_names: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        let p = rows[0].len();
        if p == 0 {
            return Err(Error::InvalidInput("dataset needs at least one column".into()));
        }
        let mut values = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::InvalidInput(format!("row {i} has {} columns, expected {p}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(values, p, column_names)
    }

    /// Build from a row-major buffer of `n * p` values.
    pub fn from_flat(values: Vec<f64>, p: usize, column_names: Option<Vec<String>>) -> Result<Self> {
        if p == 0 || values.is_empty() || !values.len().is_multiple_of(p) {
            return Err(Error::InvalidInput(format!("{} values do not fill rows of width {p}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                i / p,
                i % p
            )));
        }
        let names = match column_names {
            Some(c) if c.len() == p => c,
            Some(c) => return Err(Error::InvalidInput(format!("{} column names for {p} columns", c.len()))),
            None => (0..p).map(|j| format!("x{j}")).collect(),
        };
        Ok(Dataset { n: values.len() / p, values, p, column_names: names })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// CSV with a header row and numeric columns.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::InvalidInput(format!("line {} has {} fields", i + 2, rec.len())));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("line {}: cannot parse {field:?}", i + 2)))?;
                values.push(v);
            }
        }
        Self::from_flat(values, names.len(), Some(names))
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.column_names)?;
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.values)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            if i >= self.n {
                return Err(Error::InvalidInput(format!("row {i} out of range")));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::from_flat(values, self.p, Some(self.column_names.clone()))
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.p];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter().map(|s| s / self.n as f64).collect()
    }

    /// Per-column z-scores using the population standard deviation. Constant
    /// columns are only centred.
    pub fn standardize(&self) -> (Dataset, Vec<f64>, Vec<f64>) {
        let means = self.column_means();
        let mut sds = vec![0.0; self.p];
        for r in self.rows() {
            for j in 0..self.p {
                sds[j] += (r[j] - means[j]).powi(2);
            }
        }
        for s in sds.iter_mut() {
            *s = (*s / self.n as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v - means[i % self.p]) / sds[i % self.p])
            .collect();
        let ds = Dataset { values, n: self.n, p: self.p, column_names: self.column_names.clone() };
        (ds, means, sds)
    }
}

/// The bundled Old Faithful geyser data (eruption length, waiting time).
pub fn faithful() -> Dataset {
    Dataset::from_csv_reader(FAITHFUL_CSV.as_bytes()).expect("bundled data parses")
}

pub const FAITHFUL_CSV: &str = include_str!("../../data/faithful.csv");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faithful_shape() {
        let d = faithful();
        assert_eq!((d.n(), d.p()), (272, 2));
        assert_eq!(d.row(0), &[3.6, 79.0]);
        assert_eq!(d.column_names(), &["eruptions".to_string(), "waiting".to_string()]);
    }

    #[test]
    fn rejects_nan_and_ragged_rows() {
        assert!(Dataset::from_csv_reader("a,b\n1,NaN\n".as_bytes()).is_err());
        assert!(Dataset::from_csv_reader("a,b\n1,2\n3\n".as_bytes()).is_err());
        assert!(Dataset::from_csv_reader("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn standardized_columns_have_unit_scale() {
        let (z, _, _) = faithful().standardize();
        for j in 0..2 {
            let c = z.column(j);
            let m: f64 = c.iter().sum::<f64>() / c.len() as f64;
            let v: f64 = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / c.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]], None).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::from_csv_reader(buf.as_slice()).unwrap(), d);
    }
}
