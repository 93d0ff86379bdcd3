use crate::numerics::Vector;
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `A x` — returns a vector of length `rows`.
    pub fn matvec(&self, x: &Vector<T>) -> Vector<T> {
        assert_eq!(self.cols, x.len(), "matvec: shape mismatch");
        let mut out = Vector::zeros(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x.as_slice()) {
                acc = acc + *a * *b;
            }
            out[r] = acc;
        }
        out
    }

    /// `Aᵀ y` — returns a vector of length `cols`.
    pub fn matvec_t(&self, y: &Vector<T>) -> Vector<T> {
        assert_eq!(self.rows, y.len(), "matvec_t: shape mismatch");
        let mut out = Vector::zeros(self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            let yr = y[r];
            for (c, a) in row.iter().enumerate() {
                out[c] = out[c] + *a * yr;
            }
        }
        out
    }

    /// Rank-1 accumulation `self += y xᵀ` (gradient of `A x` w.r.t. `A`).
    pub fn add_outer(&mut self, y: &Vector<T>, x: &Vector<T>) {
        assert_eq!(self.rows, y.len(), "add_outer: row mismatch");
        assert_eq!(self.cols, x.len(), "add_outer: col mismatch");
        for r in 0..self.rows {
            let yr = y[r];
            let row = self.row_mut(r);
            for (a, b) in row.iter_mut().zip(x.as_slice()) {
                *a = *a + yr * *b;
            }
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Matrix<T>) {
        assert_eq!(self.rows, other.rows, "axpy: row mismatch");
        assert_eq!(self.cols, other.cols, "axpy: col mismatch");
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + alpha * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}
