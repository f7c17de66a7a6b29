use super::{EnergyError, EnergyPrior, NoiseSchedule};
use crate::linalg::{cholesky, Matrix};
use crate::RealMatrix;

/// Exact energy of a zero-mean Gaussian, usable in place of a trained network.
///
/// At step `t` the marginal is `N(0, C_t)` and the energy is
/// `f(h, t) = ½ √(1 - ᾱ_t) hᵀ C_t⁻¹ h`, so that `-f/√(1 - ᾱ_t)` is the exact
/// log-density up to a constant.
#[derive(Clone, Debug)]
pub struct GaussianEnergy {
    schedule: NoiseSchedule,
    covs: Vec<RealMatrix>,
    precisions: Vec<RealMatrix>,
}

fn inverse_spd(m: &RealMatrix) -> Result<RealMatrix, EnergyError> {
    let n = m.rows();
    let chol = cholesky(m).map_err(|e| EnergyError::ShapeMismatch(e.to_string()))?;
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol.solve(&e).expect("square factor");
        for (i, v) in col.into_iter().enumerate() {
            inv[(i, j)] = v;
        }
    }
    Ok(inv.symmetrize().expect("square"))
}

impl GaussianEnergy {
    fn with_covs(schedule: NoiseSchedule, covs: Vec<RealMatrix>) -> Result<Self, EnergyError> {
        let precisions = covs.iter().map(inverse_spd).collect::<Result<_, _>>()?;
        Ok(Self {
            schedule,
            covs,
            precisions,
        })
    }

    /// Diffused data prior `h0 ~ N(0, C0)`: `C_t = ᾱ_t C0 + (1 - ᾱ_t) I`.
    pub fn from_data_cov(schedule: NoiseSchedule, c0: &RealMatrix) -> Result<Self, EnergyError> {
        if !c0.is_square() {
            return Err(EnergyError::ShapeMismatch(
                "covariance must be square".into(),
            ));
        }
        let covs = (1..=schedule.t_max())
            .map(|t| {
                let ab = schedule.alpha_bar(t);
                c0.scale(ab).add_diag(1.0 - ab)
            })
            .collect();
        Self::with_covs(schedule, covs)
    }

    /// The same target `N(0, C)` at every step.
    pub fn stationary(schedule: NoiseSchedule, cov: &RealMatrix) -> Result<Self, EnergyError> {
        if !cov.is_square() {
            return Err(EnergyError::ShapeMismatch(
                "covariance must be square".into(),
            ));
        }
        let covs = vec![cov.clone(); schedule.t_max()];
        Self::with_covs(schedule, covs)
    }

    pub fn cov(&self, t: usize) -> &RealMatrix {
        &self.covs[t - 1]
    }

    fn check(&self, h: &[f64], t: usize) -> Result<(), EnergyError> {
        if t == 0 || t > self.schedule.t_max() {
            return Err(EnergyError::IndexOutOfRange {
                t,
                t_max: self.schedule.t_max(),
            });
        }
        if h.len() != self.dim() {
            return Err(EnergyError::ShapeMismatch(format!(
                "state of length {} for dimension {}",
                h.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

impl EnergyPrior for GaussianEnergy {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.covs[0].rows()
    }

    fn energy_and_epsilon(&self, h: &[f64], t: usize) -> Result<(f64, Vec<f64>), EnergyError> {
        self.check(h, t)?;
        let c = (1.0 - self.schedule.alpha_bar(t)).sqrt();
        let ph = self.precisions[t - 1].matvec(h).expect("checked length");
        let quad: f64 = h.iter().zip(&ph).map(|(a, b)| a * b).sum();
        Ok((0.5 * c * quad, ph.into_iter().map(|v| c * v).collect()))
    }
}
