//! MIMO channel estimation by posterior sampling from an energy-based
//! diffusion prior with Metropolis-Hastings corrections.

pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod channel;
pub mod cli;
pub mod energy;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod sampler;
mod scalar;

pub use scalar::Scalar;

pub type RealMatrix = linalg::Matrix<f64>;
pub type ComplexMatrix = linalg::CMatrix<f64>;
pub type RealVector = Vec<f64>;
pub type Complex64 = num_complex::Complex<f64>;
