//! The `T x d` panel that carries observations and residuals between stages.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A `T x d` real panel: one row per period, one column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    data: DMatrix<f64>,
}

impl TimeSeriesMatrix {
    pub fn new(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    /// Builds a panel from row vectors; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(Error::Shape("panel needs at least one row".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            data: DMatrix::from_fn(t, d, |i, j| rows[i][j]),
        })
    }

    pub fn zeros(t: usize, d: usize) -> Self {
        Self {
            data: DMatrix::zeros(t, d),
        }
    }

    /// Number of periods.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Number of series.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.data[(t, j)]
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.data.row(t).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Data("panel contains non-finite values".into()))
        }
    }

    pub fn column_means(&self) -> DVector<f64> {
        let t = self.len() as f64;
        DVector::from_fn(self.dim(), |j, _| self.data.column(j).sum() / t)
    }

    /// Copy with every column shifted to mean zero.
    pub fn demeaned(&self) -> Self {
        let means = self.column_means();
        let mut data = self.data.clone();
        for (j, mut col) in data.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        Self { data }
    }

    /// Biased (divide-by-`T`) covariance of the columns.
    pub fn covariance(&self) -> DMatrix<f64> {
        let c = self.demeaned();
        let t = self.len() as f64;
        (c.data.transpose() * &c.data) / t
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data.rows(start, end - start).into_owned(),
        }
    }

    /// Rows `idx[0], idx[1], ...` as a new panel.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let d = self.dim();
        Self {
            data: DMatrix::from_fn(idx.len(), d, |i, j| self.data[(idx[i], j)]),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
        }
    }
}

impl From<DMatrix<f64>> for TimeSeriesMatrix {
    fn from(data: DMatrix<f64>) -> Self {
        Self::new(data)
    }
}
