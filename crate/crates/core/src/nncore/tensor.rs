use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "tensor data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x + b
    pub fn matvec_add(&self, x: &[f64], b: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(b.len(), self.rows);
        y.clear();
        y.reserve(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = b[r];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            y.push(acc);
        }
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.rows);
        y.clear();
        y.resize(self.cols, 0.0);
        for r in 0..self.rows {
            let xv = x[r];
            if xv == 0.0 {
                continue;
            }
            let row = self.row(r);
            for (yv, w) in y.iter_mut().zip(row) {
                *yv += w * xv;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn matvec_matches_hand_computation() {
        let a = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut y = Vec::new();
        a.matvec_add(&[1.0, 0.0, -1.0], &[10.0, 20.0], &mut y);
        assert_eq!(y, vec![10.0 + 1.0 - 3.0, 20.0 + 4.0 - 6.0]);

        let mut yt = Vec::new();
        a.matvec_transpose(&[1.0, -1.0], &mut yt);
        assert_eq!(yt, vec![1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0]);
    }
}
