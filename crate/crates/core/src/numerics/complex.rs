//! Complex matrices as pairs of real tensors, and the real-stacking map
//! between them and the flat real vectors the networks consume.
//!
//! `c2r` vectorizes by stacking columns, then places every real part before
//! every imaginary part: `[Re(vec Z); Im(vec Z)]`.

use num_complex::Complex64;

use super::tensor::RealTensor;
use crate::error::{dim_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    re: RealTensor,
    im: RealTensor,
}

impl ComplexMatrix {
    pub fn from_parts(re: RealTensor, im: RealTensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(dim_err(
                "ComplexMatrix::from_parts",
                format!("{:?}", re.shape()),
                format!("{:?}", im.shape()),
            ));
        }
        let (rows, cols) = (re.rows(), re.cols());
        let re = re.reshaped(vec![rows, cols])?;
        let im = im.reshaped(vec![rows, cols])?;
        Ok(Self { rows, cols, re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: RealTensor::zeros(&[rows, cols]),
            im: RealTensor::zeros(&[rows, cols]),
        }
    }

    /// Builds from row-major complex entries.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let z = f(r, c);
                re.push(z.re);
                im.push(z.im);
            }
        }
        Self {
            rows,
            cols,
            re: RealTensor::from_parts(vec![rows, cols], re),
            im: RealTensor::from_parts(vec![rows, cols], im),
        }
    }

    pub fn column(values: &[Complex64]) -> Self {
        Self::from_fn(values.len(), 1, |r, _| values[r])
    }

    pub fn row(values: &[Complex64]) -> Self {
        Self::from_fn(1, values.len(), |_, c| values[c])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn re(&self) -> &RealTensor {
        &self.re
    }

    pub fn im(&self) -> &RealTensor {
        &self.im
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let i = r * self.cols + c;
        Complex64::new(self.re.data()[i], self.im.data()[i])
    }

    pub fn set(&mut self, r: usize, c: usize, z: Complex64) {
        let i = r * self.cols + c;
        self.re.data_mut()[i] = z.re;
        self.im.data_mut()[i] = z.im;
    }

    /// Column `c` as a vector of complex entries.
    pub fn column_values(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.re.sum_squares() + self.im.sum_squares()
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != other.rows {
            return Err(dim_err("ComplexMatrix::matmul", self.cols, other.rows));
        }
        Ok(Self::from_fn(self.rows, other.cols, |r, c| {
            (0..self.cols).map(|k| self.get(r, k) * other.get(k, c)).sum()
        }))
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(dim_err(
                "ComplexMatrix::add",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(Self::from_fn(self.rows, self.cols, |r, c| self.get(r, c) + other.get(r, c)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_fn(self.rows, self.cols, |r, c| self.get(r, c) * s)
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }
}

/// Real stacking `[Re(vec Z); Im(vec Z)]` with column-major vectorization.
pub fn c2r(z: &ComplexMatrix) -> RealTensor {
    let n = z.rows * z.cols;
    let mut out = vec![0.0; 2 * n];
    for c in 0..z.cols {
        for r in 0..z.rows {
            let src = r * z.cols + c;
            let dst = c * z.rows + r;
            out[dst] = z.re.data()[src];
            out[n + dst] = z.im.data()[src];
        }
    }
    RealTensor::from_parts(vec![2 * n], out)
}

/// Inverse of [`c2r`].
pub fn r2c(v: &RealTensor, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    r2c_slice(v.data(), rows, cols)
}

pub fn r2c_slice(v: &[f64], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    let n = rows * cols;
    if v.len() != 2 * n {
        return Err(dim_err("r2c", 2 * n, v.len()));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |r, c| {
        let i = c * rows + r;
        Complex64::new(v[i], v[n + i])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn c2r_scalar() {
        let z = ComplexMatrix::column(&[c(1.0, 2.0)]);
        assert_eq!(c2r(&z).data(), &[1.0, 2.0]);
    }

    #[test]
    fn c2r_pure_imaginary_row() {
        let z = ComplexMatrix::row(&[c(0.0, 1.0), c(0.0, -1.0)]);
        assert_eq!(c2r(&z).data(), &[0.0, 0.0, 1.0, -1.0]);
    }

    #[test]
    fn c2r_stacks_columns() {
        // [[a, b], [c, d]] -> re parts a, c, b, d
        let z = ComplexMatrix::from_fn(2, 2, |r, col| c((r * 2 + col) as f64, 10.0));
        assert_eq!(&c2r(&z).data()[..4], &[0.0, 2.0, 1.0, 3.0]);
    }

    #[test]
    fn r2c_examples() {
        let z = r2c(&RealTensor::row(vec![1.0, 2.0]), 1, 1).unwrap();
        assert_eq!(z.get(0, 0), c(1.0, 2.0));
        let z = r2c(&RealTensor::row(vec![0.0; 4]), 2, 1).unwrap();
        assert_eq!(z, ComplexMatrix::zeros(2, 1));
        assert!(r2c(&RealTensor::row(vec![0.0; 3]), 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_matrix(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut rng = crate::numerics::Rng::new(seed);
            let z = ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_normal(1.0));
            let back = r2c(&c2r(&z), rows, cols).unwrap();
            prop_assert_eq!(&back, &z);
            let v = c2r(&back);
            prop_assert_eq!(v, c2r(&z));
        }
    }
}
