use nalgebra::DMatrix;

use super::FdfmError;
use crate::spline::KnotGrid;

/// An n×m panel of curves sampled on a common knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePanel {
    data: DMatrix<f64>,
    grid: KnotGrid,
    dates: Option<Vec<String>>,
}

impl CurvePanel {
    pub fn new(data: DMatrix<f64>, grid: KnotGrid, dates: Option<Vec<String>>) -> Result<Self, FdfmError> {
        if data.ncols() != grid.len() {
            return Err(FdfmError::Panel(format!(
                "{} columns but {} knots",
                data.ncols(),
                grid.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            let (i, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(FdfmError::Panel(format!("non-finite value at row {i}, column {j}")));
        }
        if let Some(d) = &dates {
            if d.len() != data.nrows() {
                return Err(FdfmError::Panel(format!("{} dates for {} rows", d.len(), data.nrows())));
            }
        }
        Ok(Self { data, grid, dates })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn maturities(&self) -> &[f64] {
        self.grid.knots()
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    /// Rows `[start, end)`.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data.rows(start, end - start).into_owned(),
            grid: self.grid.clone(),
            dates: self.dates.as_ref().map(|d| d[start..end].to_vec()),
        }
    }

    /// Keep only the listed columns (in increasing order).
    pub fn select_columns(&self, keep: &[usize]) -> Result<Self, FdfmError> {
        let knots: Vec<f64> = keep.iter().map(|&j| self.grid.knots()[j]).collect();
        let grid = KnotGrid::new(knots)?;
        let data = DMatrix::from_fn(self.n(), keep.len(), |i, c| self.data[(i, keep[c])]);
        Self::new(data, grid, self.dates.clone())
    }

    /// Drop columns whose maturity is below `min_maturity`.
    pub fn filter_maturities(&self, min_maturity: f64) -> Result<Self, FdfmError> {
        let keep: Vec<usize> = (0..self.m()).filter(|&j| self.grid.knots()[j] >= min_maturity).collect();
        self.select_columns(&keep)
    }

    /// Multiply every value by `factor` (unit conversion).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: &self.data * factor,
            grid: self.grid.clone(),
            dates: self.dates.clone(),
        }
    }
}
