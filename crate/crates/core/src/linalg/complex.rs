use std::ops::{Index, IndexMut};

use num_complex::Complex;

use super::{LinalgError, Matrix};
use crate::Scalar;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self, LinalgError> {
        let len = rows
            .checked_mul(cols)
            .ok_or(LinalgError::DimensionOverflow { rows, cols })?;
        if data.len() != len {
            return Err(LinalgError::DimensionMismatch(format!(
                "{rows}x{cols} complex matrix needs {len} entries, got {}",
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(LinalgError::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(T::one(), T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex<T>,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column-stacked vector viewed as a `rows x cols` matrix (inverse of [`CMatrix::vec`]).
    pub fn from_vec(rows: usize, cols: usize, v: &[Complex<T>]) -> Result<Self, LinalgError> {
        if v.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "vector of length {} cannot fill {rows}x{cols}",
                v.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |i, j| v[i + rows * j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "complex matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] = out.data[i * rhs.cols + j] + a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Result<Vec<Complex<T>>, LinalgError> {
        if x.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "complex matvec {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (&a, &b)| {
                        acc + a * b
                    })
            })
            .collect())
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Vec<Complex<T>> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Real composite embedding `[[Re, -Im], [Im, Re]]`.
    pub fn real_embedding(&self) -> Matrix<T> {
        let (m, n) = (self.rows, self.cols);
        Matrix::from_fn(2 * m, 2 * n, |i, j| {
            let z = self[(i % m, j % n)];
            match (i < m, j < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;

    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron<T: Scalar>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>, LinalgError> {
    let overflow = || LinalgError::DimensionOverflow {
        rows: a.rows.saturating_mul(b.rows),
        cols: a.cols.saturating_mul(b.cols),
    };
    let rows = a.rows.checked_mul(b.rows).ok_or_else(overflow)?;
    let cols = a.cols.checked_mul(b.cols).ok_or_else(overflow)?;
    rows.checked_mul(cols).ok_or_else(overflow)?;
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    }))
}

/// Unitary DFT matrix with entries `exp(-j 2π k l / n) / √n`.
pub fn dft_matrix<T: Scalar>(n: usize) -> CMatrix<T> {
    assert!(n >= 1, "DFT size must be at least 1");
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, l| {
        // reduce k*l mod n first so large sizes keep full phase accuracy
        let phase = -2.0 * std::f64::consts::PI * ((k * l) % n) as f64 / n as f64;
        Complex::new(T::of(phase.cos() * scale), T::of(phase.sin() * scale))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn kron_with_unit_scalar_is_identity_map() {
        let b = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64 - 1.0));
        let one = CMatrix::identity(1);
        assert_eq!(kron(&one, &b).unwrap(), b);
    }

    #[test]
    fn kron_of_identities() {
        let k = kron(&CMatrix::<f64>::identity(2), &CMatrix::identity(3)).unwrap();
        assert_eq!(k, CMatrix::identity(6));
    }

    #[test]
    fn small_dfts() {
        let f1 = dft_matrix::<f64>(1);
        assert_eq!(f1, CMatrix::identity(1));
        let f2 = dft_matrix::<f64>(2);
        let s = 1.0 / 2f64.sqrt();
        let want = CMatrix::new(2, 2, vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)]).unwrap();
        assert!(f2.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn real_embedding_layout() {
        let z = CMatrix::new(1, 1, vec![c(2.0, 3.0)]).unwrap();
        let e = z.real_embedding();
        assert_eq!(e.data(), &[2.0, -3.0, 3.0, 2.0]);
    }

    #[test]
    fn vec_round_trip() {
        let h = CMatrix::from_fn(2, 3, |i, j| c(i as f64, j as f64));
        let v = h.vec();
        assert_eq!(v[1], h[(1, 0)]);
        assert_eq!(CMatrix::from_vec(2, 3, &v).unwrap(), h);
    }
}
