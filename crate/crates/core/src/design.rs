use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major design matrix with named columns and no intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    names: Vec<String>,
    x: Vec<f64>,
    nrows: usize,
}

impl Design {
    pub fn from_flat(names: Vec<String>, x: Vec<f64>, nrows: usize) -> Self {
        assert_eq!(names.len() * nrows, x.len(), "ragged design");
        Design { names, x, nrows }
    }

    /// Builds a design from rows; every row must have `names.len()` entries.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = names.len();
        let mut x = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            if r.len() != ncols {
                return Err(Error::Dimension { expected: ncols, got: r.len() });
            }
            x.extend_from_slice(r);
        }
        Ok(Design { names, x, nrows: rows.len() })
    }

    /// Design with `n` rows and no columns.
    pub fn empty(n: usize) -> Self {
        Design { names: Vec::new(), x: Vec::new(), nrows: n }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.ncols();
        &self.x[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.ncols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Copy with column `name` set to `value` on every row.
    pub fn with_column_value(&self, name: &str, value: f64) -> Result<Self> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("design has no column `{name}`")))?;
        let d = self.ncols();
        let mut out = self.clone();
        for i in 0..out.nrows {
            out.x[i * d + j] = value;
        }
        Ok(out)
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.ncols());
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Design { names: self.names.clone(), x, nrows: idx.len() }
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        let d = self.ncols();
        let x = self.x[range.start * d..range.end * d].to_vec();
        Design { names: self.names.clone(), x, nrows: range.len() }
    }

    /// First `k` columns.
    pub fn prefix_columns(&self, k: usize) -> Self {
        self.select_columns(&(0..k).collect::<Vec<_>>())
    }

    /// Columns `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut x = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let r = self.row(i);
            x.extend(cols.iter().map(|&j| r[j]));
        }
        Design {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            x,
            nrows: self.nrows,
        }
    }

    /// Requires identical column names, in order.
    pub fn check_names(&self, expected: &[String]) -> Result<()> {
        if self.ncols() != expected.len() {
            return Err(Error::Dimension { expected: expected.len(), got: self.ncols() });
        }
        if let Some((a, b)) = self.names.iter().zip(expected).find(|(a, b)| a != b) {
            return Err(Error::InvalidArgument(format!(
                "design column `{a}` where `{b}` was expected"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Design {
        Design::from_rows(
            vec!["x".into(), "a".into()],
            &[vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn shape_and_access() {
        let d = toy();
        assert_eq!((d.nrows(), d.ncols()), (3, 2));
        assert_eq!(d.row(1), &[2.0, 1.0]);
        assert_eq!(d.column(0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn counterfactual_column() {
        let d = toy().with_column_value("a", 1.0).unwrap();
        assert_eq!(d.column(1), vec![1.0; 3]);
        assert!(toy().with_column_value("zz", 1.0).is_err());
    }

    #[test]
    fn row_and_column_selection() {
        let d = toy();
        assert_eq!(d.select_rows(&[2, 0]).column(0), vec![3.0, 1.0]);
        assert_eq!(d.slice_rows(1..3).nrows(), 2);
        assert_eq!(d.prefix_columns(1).names(), &["x".to_string()]);
        assert_eq!(d.prefix_columns(0).nrows(), 3);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = Design::from_rows(vec!["x".into()], &[vec![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 1, got: 2 }));
    }
}
