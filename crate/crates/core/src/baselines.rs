//! Linear reference estimators: regularized least squares and LMMSE with a
//! sample covariance.

use thiserror::Error;

use crate::linalg::{solve_spd, LinalgError, Matrix};
use crate::measurement::EstimationProblem;
use crate::RealMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("system is singular: {0}")]
    SingularSystem(LinalgError),
    #[error("need at least {needed} training samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

fn singular(e: LinalgError) -> BaselineError {
    match e {
        LinalgError::DimensionMismatch(m) => BaselineError::DimensionMismatch(m),
        other => BaselineError::SingularSystem(other),
    }
}

/// `ĥ = (AᵀA + σ² I)⁻¹ Aᵀ y`.
pub fn rls_estimate(problem: &EstimationProblem) -> Result<Vec<f64>, BaselineError> {
    let a = problem.a();
    let normal = a.gram_cols().add_diag(problem.sigma2);
    let rhs = a.tr_matvec(&problem.y).map_err(singular)?;
    solve_spd(&normal, &rhs).map_err(singular)
}

/// Sample mean and covariance of training vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LmmseModel {
    pub mean: Vec<f64>,
    pub cov: RealMatrix,
}

/// Fits mean and `(1/K) Σ (h - mean)(h - mean)ᵀ`, then adds `ridge · I`.
pub fn lmmse_fit(samples: &[Vec<f64>], ridge: f64) -> Result<LmmseModel, BaselineError> {
    if samples.len() < 2 {
        return Err(BaselineError::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(BaselineError::DimensionMismatch(format!(
            "sample of length {} among samples of length {n}",
            bad.len()
        )));
    }
    let k = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k);
    let mut cov = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for s in samples {
        for ((di, v), m) in d.iter_mut().zip(s).zip(&mean) {
            *di = v - m;
        }
        for i in 0..n {
            let row = &mut cov[i * n..(i + 1) * n];
            for (c, dj) in row.iter_mut().zip(&d) {
                *c += d[i] * dj;
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= k);
    let cov = Matrix::new(n, n, cov)
        .expect("square buffer")
        .symmetrize()
        .expect("square")
        .add_diag(ridge);
    Ok(LmmseModel { mean, cov })
}

impl LmmseModel {
    /// Model with a known mean and covariance.
    pub fn new(mean: Vec<f64>, cov: RealMatrix) -> Result<Self, BaselineError> {
        if !cov.is_square() || cov.rows() != mean.len() {
            return Err(BaselineError::DimensionMismatch(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        Ok(Self { mean, cov })
    }
}

/// `ĥ = mean + C Aᵀ (A C Aᵀ + σ² I)⁻¹ (y - A mean)`.
pub fn lmmse_estimate(
    model: &LmmseModel,
    problem: &EstimationProblem,
) -> Result<Vec<f64>, BaselineError> {
    let a = problem.a();
    if a.cols() != model.mean.len() {
        return Err(BaselineError::DimensionMismatch(format!(
            "model of dimension {} for operator with {} columns",
            model.mean.len(),
            a.cols()
        )));
    }
    let ac = a.matmul(&model.cov).map_err(singular)?;
    let s = ac.matmul(&a.transpose()).map_err(singular)?;
    let s = s.symmetrize().map_err(singular)?.add_diag(problem.sigma2);
    let am = a.matvec(&model.mean).map_err(singular)?;
    let r: Vec<f64> = problem.y.iter().zip(&am).map(|(y, v)| y - v).collect();
    let w = solve_spd(&s, &r).map_err(singular)?;
    let corr = ac.tr_matvec(&w).map_err(singular)?;
    Ok(model.mean.iter().zip(corr).map(|(m, c)| m + c).collect())
}
