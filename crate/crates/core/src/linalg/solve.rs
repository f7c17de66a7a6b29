use super::{LinalgError, Matrix};
use crate::Scalar;

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

pub fn cholesky<T: Scalar>(m: &Matrix<T>) -> Result<Cholesky<T>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag = diag - l[(j, k)] * l[(j, k)];
        }
        if diag <= T::zero() || !diag.is_finite() {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: j,
                value: diag.as_f64(),
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky { lower: l })
}

impl<T: Scalar> Cholesky<T> {
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// Solves `L Lᵀ x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let l = &self.lower;
        let n = l.rows();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "cholesky solve of size {n} with rhs of length {}",
                b.len()
            )));
        }
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s = s - l[(i, k)] * z[k];
            }
            z[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s = s - l[(k, i)] * z[k];
            }
            z[i] = s / l[(i, i)];
        }
        Ok(z)
    }
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd<T: Scalar>(m: &Matrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    cholesky(m)?.solve(b)
}
