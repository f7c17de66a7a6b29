//! Pilot transmission model: QPSK pilots, the angular-domain measurement
//! operator in real form, and noisy observations at a given SNR.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::linalg::{dft_matrix, kron, sym_eig, CMatrix, LinalgError, SymEig};
use crate::{Complex64, ComplexMatrix, RealMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `N_t x N_p` matrix of unit-modulus QPSK symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotMatrix {
    pub p: ComplexMatrix,
    pub seed: u64,
}

/// Draws i.i.d. QPSK pilots `(±1 ± j)/√2`.
pub fn gen_pilots<R: Rng + ?Sized>(n_t: usize, n_p: usize, seed: u64, rng: &mut R) -> PilotMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p = CMatrix::from_fn(n_t, n_p, |_, _| {
        let re = if rng.random::<bool>() { s } else { -s };
        let im = if rng.random::<bool>() { s } else { -s };
        Complex64::new(re, im)
    });
    PilotMatrix { p, seed }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArrayDims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_p: usize,
}

impl ArrayDims {
    /// Pilot density `N_p / N_t`.
    pub fn alpha(&self) -> f64 {
        self.n_p as f64 / self.n_t as f64
    }
}

/// Real measurement matrix together with the eigendecomposition of `A Aᵀ`,
/// computed once and shared by every problem using the same pilots.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    pub a: RealMatrix,
    pub gram_eig: SymEig<f64>,
    pub dims: Option<ArrayDims>,
}

impl MeasurementOperator {
    pub fn from_matrix(a: RealMatrix) -> Result<Self, MeasurementError> {
        let gram_eig = sym_eig(&a.gram_rows())?;
        Ok(Self {
            a,
            gram_eig,
            dims: None,
        })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }
}

/// Complex angular-domain operator `A_ad = (Pᵀ ⊗ I_{N_r}) (F_Tᴴ ⊗ F_R)`.
pub fn angular_operator(p: &PilotMatrix, n_r: usize) -> Result<ComplexMatrix, MeasurementError> {
    let n_t = p.p.rows();
    let a_c = kron(&p.p.transpose(), &CMatrix::identity(n_r))?;
    let basis = kron(&dft_matrix::<f64>(n_t).conj_transpose(), &dft_matrix(n_r))?;
    Ok(a_c.matmul(&basis)?)
}

/// Real embedding `[[Re A_ad, -Im A_ad], [Im A_ad, Re A_ad]]` of the angular operator.
pub fn build_operator(p: &PilotMatrix, n_r: usize) -> Result<RealMatrix, MeasurementError> {
    if n_r == 0 || p.p.rows() == 0 || p.p.cols() == 0 {
        return Err(MeasurementError::DimensionMismatch(format!(
            "empty array: N_t={}, N_p={}, N_r={n_r}",
            p.p.rows(),
            p.p.cols()
        )));
    }
    Ok(angular_operator(p, n_r)?.real_embedding())
}

/// Builds the operator and its Gram eigendecomposition.
pub fn measurement_operator(
    p: &PilotMatrix,
    n_r: usize,
) -> Result<MeasurementOperator, MeasurementError> {
    let mut op = MeasurementOperator::from_matrix(build_operator(p, n_r)?)?;
    op.dims = Some(ArrayDims {
        n_t: p.p.rows(),
        n_r,
        n_p: p.p.cols(),
    });
    Ok(op)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrSpec {
    pub snr_db: f64,
}

/// Per-real-dimension noise variance for `SNR = N_t / (2σ²)`.
pub fn sigma2_from_snr(spec: SnrSpec, n_t: usize) -> f64 {
    n_t as f64 / (2.0 * 10f64.powf(spec.snr_db / 10.0))
}

/// The triplet `{y, A, σ²}` with `A`'s spectral data attached.
#[derive(Clone, Debug)]
pub struct EstimationProblem {
    pub op: Arc<MeasurementOperator>,
    pub y: Vec<f64>,
    pub sigma2: f64,
}

impl EstimationProblem {
    pub fn new(
        op: Arc<MeasurementOperator>,
        y: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self, MeasurementError> {
        if y.len() != op.m() {
            return Err(MeasurementError::DimensionMismatch(format!(
                "observation of length {} for operator with {} rows",
                y.len(),
                op.m()
            )));
        }
        Ok(Self { op, y, sigma2 })
    }

    pub fn a(&self) -> &RealMatrix {
        &self.op.a
    }

    pub fn gram_eig(&self) -> &SymEig<f64> {
        &self.op.gram_eig
    }

    pub fn m(&self) -> usize {
        self.op.m()
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }
}

/// `y = A h + n` with `n ~ N(0, σ² I)`.
pub fn synthesize<R: Rng + ?Sized>(
    h: &[f64],
    op: &Arc<MeasurementOperator>,
    sigma2: f64,
    rng: &mut R,
) -> Result<EstimationProblem, MeasurementError> {
    if h.len() != op.n() {
        return Err(MeasurementError::DimensionMismatch(format!(
            "channel of length {} for operator with {} columns",
            h.len(),
            op.n()
        )));
    }
    let mut y = op.a.matvec(h)?;
    if sigma2 > 0.0 {
        let noise = Normal::new(0.0, sigma2.sqrt()).expect("positive variance");
        for v in &mut y {
            *v += noise.sample(rng);
        }
    }
    EstimationProblem::new(Arc::clone(op), y, sigma2)
}
