use super::{LinalgError, Matrix};
use crate::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `M = U diag(λ) Uᵀ` of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEig<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Matrix<T>,
}

impl<T: Scalar> SymEig<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let u = &self.eigenvectors;
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            (0..n).fold(T::zero(), |acc, k| {
                acc + u[(i, k)] * self.eigenvalues[k] * u[(j, k)]
            })
        })
    }

    /// Number of eigenvalues strictly above `tol`.
    pub fn rank(&self, tol: T) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }
}

fn off_diag_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver. The input is symmetrized as `(M + Mᵀ)/2` first.
pub fn sym_eig<T: Scalar>(m: &Matrix<T>) -> Result<SymEig<T>, LinalgError> {
    let mut a = m.symmetrize()?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm().max(T::one());
    let tol = T::of(1e-12).max(T::epsilon() * T::of(n as f64)) * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diag_norm(&a) < tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (T::of(2.0) * apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off = off_diag_norm(&a);
        if off >= tol {
            return Err(LinalgError::NonConvergence {
                sweeps: MAX_SWEEPS,
                off_norm: off.as_f64(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .partial_cmp(&a[(j, j)])
            .expect("finite eigenvalues")
    });
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Applies `(c·M + d·I)⁻¹` to `rhs` using the eigendecomposition of `M`.
pub fn spectral_solve<T: Scalar>(
    eig: &SymEig<T>,
    c: T,
    d: T,
    rhs: &[T],
) -> Result<Vec<T>, LinalgError> {
    let n = eig.dim();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "spectral solve of size {n} with rhs of length {}",
            rhs.len()
        )));
    }
    let u = &eig.eigenvectors;
    let mut coeffs = u.tr_matvec(rhs)?;
    for (coef, &lambda) in coeffs.iter_mut().zip(&eig.eigenvalues) {
        let shifted = c * lambda + d;
        if shifted <= T::of(1e-14) {
            return Err(LinalgError::SingularShift(shifted.as_f64()));
        }
        *coef = *coef / shifted;
    }
    u.matvec(&coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let m = Matrix::<f64>::from_diag(&[3.0, 1.0]);
        let e = sym_eig(&m).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 3.0]);
        for j in 0..2 {
            let col: Vec<f64> = (0..2).map(|i| e.eigenvectors[(i, j)].abs()).collect();
            assert!(col.contains(&1.0) && col.contains(&0.0));
        }
    }

    #[test]
    fn two_by_two() {
        let m = Matrix::<f64>::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_solve_scalar_and_diagonal() {
        let e = sym_eig(&Matrix::<f64>::identity(3)).unwrap();
        let x = spectral_solve(&e, 0.0, 2.0, &[2.0, 4.0, -6.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, -3.0]);

        let e = sym_eig(&Matrix::<f64>::from_diag(&[1.0, 4.0])).unwrap();
        let x = spectral_solve(&e, 1.0, 1.0, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn singular_shift_is_rejected() {
        let e = sym_eig(&Matrix::<f64>::from_diag(&[0.0, 1.0])).unwrap();
        assert!(matches!(
            spectral_solve(&e, 1.0, 0.0, &[1.0, 1.0]),
            Err(LinalgError::SingularShift(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let m = Matrix::from_rows(&[&[2.0f32, 1.0], &[1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-5);
    }
}
