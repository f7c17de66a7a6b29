//! Annealed posterior sampling with Metropolis-Hastings corrections.
//!
//! Each step `t = T..1` builds a Langevin-style proposal from the prior score
//! and the noise-perturbed likelihood score, then accepts it with the MH
//! probability computed from energy differences. With MH disabled every
//! proposal is accepted, which is the plain diffusion sampler.

mod trace;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyError, EnergyPrior, NoiseSchedule};
use crate::linalg::{dot, norm_sq, spectral_solve, LinalgError};
use crate::measurement::EstimationProblem;
use crate::rng;

pub use trace::{SamplerTrace, StepRecord};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("transition kernel at step {t} has zero variance")]
    DegenerateKernel { t: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite state at step {t}")]
    NonFinite { t: usize, trace: SamplerTrace },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Step index at which a state is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStep {
    /// The current step `t`.
    #[default]
    Current,
    /// The next step `t - 1`.
    Next,
}

impl ScoreStep {
    fn at(self, t: usize) -> usize {
        match self {
            ScoreStep::Current => t,
            ScoreStep::Next => (t - 1).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Weight `s` of the likelihood score in the proposal drift.
    #[serde(default = "default_scale")]
    pub grad_scale_s: f64,
    #[serde(default = "default_true")]
    pub mh_enabled: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Use `√β̃_t` rather than `β̃_t` as the proposal standard deviation.
    #[serde(default)]
    pub ddpm_std_sqrt: bool,
    /// Step at which the proposed state's prior and likelihood are scored in the MH ratio.
    #[serde(default)]
    pub proposal_step: ScoreStep,
    /// Step at which the score inside the reverse kernel `q(h_t | h_prop)` is evaluated.
    #[serde(default)]
    pub reverse_kernel_step: ScoreStep,
}

fn default_scale() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_t_max() -> usize {
    100
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            grad_scale_s: default_scale(),
            mh_enabled: true,
            seed: 0,
            t_max: default_t_max(),
            ddpm_std_sqrt: false,
            proposal_step: ScoreStep::Current,
            reverse_kernel_step: ScoreStep::Current,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<(), SamplerError> {
        if !self.grad_scale_s.is_finite() || self.grad_scale_s <= 0.0 {
            return Err(SamplerError::InvalidConfig(format!(
                "grad_scale_s must be positive, got {}",
                self.grad_scale_s
            )));
        }
        if self.t_max != schedule.t_max() {
            return Err(SamplerError::InvalidConfig(format!(
                "t_max {} differs from the model schedule's {}",
                self.t_max,
                schedule.t_max()
            )));
        }
        Ok(())
    }

    /// Proposal standard deviation at step `t`.
    pub fn kernel_std(&self, schedule: &NoiseSchedule, t: usize) -> f64 {
        let bt = schedule.beta_tilde(t);
        if self.ddpm_std_sqrt {
            bt.sqrt()
        } else {
            bt
        }
    }
}

fn check_step(schedule: &NoiseSchedule, t: usize) -> Result<(), SamplerError> {
    if t == 0 || t > schedule.t_max() {
        return Err(EnergyError::IndexOutOfRange {
            t,
            t_max: schedule.t_max(),
        }
        .into());
    }
    Ok(())
}

/// `∇ log p_t(h) ≈ -ε_θ(h, t) / √(1 - ᾱ_t)`.
pub fn prior_score<P: EnergyPrior + ?Sized>(
    model: &P,
    h: &[f64],
    t: usize,
) -> Result<Vec<f64>, SamplerError> {
    check_step(model.schedule(), t)?;
    let c = -1.0 / (1.0 - model.schedule().alpha_bar(t)).sqrt();
    Ok(model.epsilon(h, t)?.into_iter().map(|e| c * e).collect())
}

/// `log p_t(h) = -f_θ(h, t) / √(1 - ᾱ_t)` up to an additive constant.
pub fn log_prior<P: EnergyPrior + ?Sized>(
    model: &P,
    h: &[f64],
    t: usize,
) -> Result<f64, SamplerError> {
    check_step(model.schedule(), t)?;
    Ok(-model.energy(h, t)? / (1.0 - model.schedule().alpha_bar(t)).sqrt())
}

/// `Σ_t⁻¹ (y - A h / √ᾱ_t)` with `Σ_t = ((1 - ᾱ_t)/ᾱ_t) A Aᵀ + σ² I`.
fn whitened_residual(
    problem: &EstimationProblem,
    h: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<(Vec<f64>, Vec<f64>), SamplerError> {
    check_step(schedule, t)?;
    if h.len() != problem.n() {
        return Err(SamplerError::DimensionMismatch(format!(
            "state of length {} for operator with {} columns",
            h.len(),
            problem.n()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let inv_sqrt = 1.0 / ab.sqrt();
    let ah = problem.a().matvec(h)?;
    let r: Vec<f64> = problem
        .y
        .iter()
        .zip(&ah)
        .map(|(y, v)| y - inv_sqrt * v)
        .collect();
    let w = spectral_solve(problem.gram_eig(), (1.0 - ab) / ab, problem.sigma2, &r)?;
    Ok((r, w))
}

/// `-½ (y - μ)ᵀ Σ_t⁻¹ (y - μ)` with `μ = A h / √ᾱ_t`; the log-determinant and
/// `2π` terms are dropped since every comparison is made at a fixed `t`.
pub fn log_likelihood(
    problem: &EstimationProblem,
    h: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<f64, SamplerError> {
    let (r, w) = whitened_residual(problem, h, t, schedule)?;
    Ok(-0.5 * dot(&r, &w))
}

/// `(1/√ᾱ_t) Aᵀ Σ_t⁻¹ (y - A h / √ᾱ_t)`.
pub fn likelihood_score(
    problem: &EstimationProblem,
    h: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>, SamplerError> {
    let (_, w) = whitened_residual(problem, h, t, schedule)?;
    let inv_sqrt = 1.0 / schedule.alpha_bar(t).sqrt();
    Ok(problem
        .a()
        .tr_matvec(&w)?
        .into_iter()
        .map(|v| inv_sqrt * v)
        .collect())
}

/// Everything the sampler needs about one state at one step.
#[derive(Clone, Debug)]
struct Scored {
    log_prior: f64,
    prior_score: Vec<f64>,
    log_lik: f64,
    lik_score: Vec<f64>,
}

fn score<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    h: &[f64],
    t: usize,
) -> Result<Scored, SamplerError> {
    let schedule = model.schedule();
    check_step(schedule, t)?;
    if h.len() != model.dim() {
        return Err(SamplerError::DimensionMismatch(format!(
            "state of length {} for a prior of dimension {}",
            h.len(),
            model.dim()
        )));
    }
    let c = 1.0 / (1.0 - schedule.alpha_bar(t)).sqrt();
    let (f, eps) = model.energy_and_epsilon(h, t)?;
    let prior_score = eps.into_iter().map(|e| -c * e).collect();
    let (log_lik, lik_score) = match problem {
        Some(p) => {
            let (r, w) = whitened_residual(p, h, t, schedule)?;
            let inv_sqrt = 1.0 / schedule.alpha_bar(t).sqrt();
            let g = p
                .a()
                .tr_matvec(&w)?
                .into_iter()
                .map(|v| inv_sqrt * v)
                .collect();
            (-0.5 * dot(&r, &w), g)
        }
        None => (0.0, vec![0.0; h.len()]),
    };
    Ok(Scored {
        log_prior: -c * f,
        prior_score,
        log_lik,
        lik_score,
    })
}

/// `(1/√α_t) [h + (1 - α_t)(prior score + s · likelihood score)]`.
fn kernel_mean(schedule: &NoiseSchedule, t: usize, h: &[f64], sc: &Scored, s: f64) -> Vec<f64> {
    let alpha = schedule.alpha(t);
    let (a, b) = (1.0 / alpha.sqrt(), 1.0 - alpha);
    h.iter()
        .zip(sc.prior_score.iter().zip(&sc.lik_score))
        .map(|(&x, (&p, &l))| a * (x + b * (p + s * l)))
        .collect()
}

/// Mean of the proposal from `h` at step `t`.
pub fn kernel_mean_at<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    h: &[f64],
    t: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>, SamplerError> {
    let sc = score(model, problem, h, t)?;
    Ok(kernel_mean(model.schedule(), t, h, &sc, cfg.grad_scale_s))
}

/// `h_prop = mean(h_t) + std_t · z`.
pub fn propose<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    h: &[f64],
    t: usize,
    cfg: &SamplerConfig,
    z: &[f64],
) -> Result<Vec<f64>, SamplerError> {
    if z.len() != h.len() {
        return Err(SamplerError::DimensionMismatch(format!(
            "noise of length {} for state of length {}",
            z.len(),
            h.len()
        )));
    }
    let std = cfg.kernel_std(model.schedule(), t);
    let mean = kernel_mean_at(model, problem, h, t, cfg)?;
    Ok(mean.iter().zip(z).map(|(m, zi)| m + std * zi).collect())
}

fn gaussian_log_kernel(to: &[f64], mean: &[f64], std: f64) -> f64 {
    let d: f64 = to.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -d / (2.0 * std * std)
}

/// `log q(to | from)` at step `t`, without the normalizing constant (equal
/// for both directions at a fixed `t`).
pub fn transition_logpdf<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    from: &[f64],
    to: &[f64],
    t: usize,
    cfg: &SamplerConfig,
) -> Result<f64, SamplerError> {
    check_step(model.schedule(), t)?;
    let std = cfg.kernel_std(model.schedule(), t);
    if std <= 0.0 {
        return Err(SamplerError::DegenerateKernel { t });
    }
    let mean = kernel_mean_at(model, problem, from, t, cfg)?;
    Ok(gaussian_log_kernel(to, &mean, std))
}

#[allow(clippy::too_many_arguments)]
fn log_acceptance_from(
    schedule: &NoiseSchedule,
    t: usize,
    cfg: &SamplerConfig,
    h: &[f64],
    at_h: &Scored,
    prop: &[f64],
    at_prop: &Scored,
    prop_kernel: &Scored,
) -> Result<f64, SamplerError> {
    let std = cfg.kernel_std(schedule, t);
    if std <= 0.0 {
        return Err(SamplerError::DegenerateKernel { t });
    }
    let s = cfg.grad_scale_s;
    let forward = gaussian_log_kernel(prop, &kernel_mean(schedule, t, h, at_h, s), std);
    let reverse = gaussian_log_kernel(h, &kernel_mean(schedule, t, prop, prop_kernel, s), std);
    Ok((at_prop.log_lik - at_h.log_lik)
        + (at_prop.log_prior - at_h.log_prior)
        + (reverse - forward))
}

/// `log P' = Δ log-likelihood + Δ log-prior + log q(h_t | h_prop) - log q(h_prop | h_t)`.
pub fn mh_log_acceptance<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    h: &[f64],
    prop: &[f64],
    t: usize,
    cfg: &SamplerConfig,
) -> Result<f64, SamplerError> {
    let at_h = score(model, problem, h, t)?;
    let at_prop = score(model, problem, prop, cfg.proposal_step.at(t))?;
    let prop_kernel = match cfg.reverse_kernel_step.at(t) {
        k if k == cfg.proposal_step.at(t) => at_prop.clone(),
        k => score(model, problem, prop, k)?,
    };
    log_acceptance_from(
        model.schedule(),
        t,
        cfg,
        h,
        &at_h,
        prop,
        &at_prop,
        &prop_kernel,
    )
}

/// Outcome of one transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub record: StepRecord,
}

/// One proposal-and-test at step `t`. The noise `z` and `log_u` are drawn by
/// the caller; a rejected proposal returns `h` unchanged.
pub fn transition<P: EnergyPrior + ?Sized>(
    model: &P,
    problem: Option<&EstimationProblem>,
    h: &[f64],
    t: usize,
    cfg: &SamplerConfig,
    z: &[f64],
    log_u: f64,
) -> Result<Step, SamplerError> {
    let schedule = model.schedule();
    let at_h = score(model, problem, h, t)?;
    let std = cfg.kernel_std(schedule, t);
    let mean = kernel_mean(schedule, t, h, &at_h, cfg.grad_scale_s);
    let prop: Vec<f64> = mean.iter().zip(z).map(|(m, zi)| m + std * zi).collect();
    let proposal_norm = norm_sq(&prop).sqrt();
    let forced = !cfg.mh_enabled || std <= 0.0;
    if forced || !prop.iter().all(|v| v.is_finite()) {
        return Ok(Step {
            state: prop,
            record: StepRecord {
                t,
                accepted: true,
                log_acc: 0.0,
                proposal_norm,
            },
        });
    }
    let at_prop = score(model, problem, &prop, cfg.proposal_step.at(t))?;
    let prop_kernel = match cfg.reverse_kernel_step.at(t) {
        k if k == cfg.proposal_step.at(t) => at_prop.clone(),
        k => score(model, problem, &prop, k)?,
    };
    let log_acc = log_acceptance_from(schedule, t, cfg, h, &at_h, &prop, &at_prop, &prop_kernel)?;
    let accepted = log_acc > log_u;
    Ok(Step {
        state: if accepted { prop } else { h.to_vec() },
        record: StepRecord {
            t,
            accepted,
            log_acc,
            proposal_norm,
        },
    })
}

/// Draws one posterior sample, running `t = T..1` from `h_T ~ N(0, I)`.
pub fn sample_posterior<P: EnergyPrior + ?Sized, R: Rng + ?Sized>(
    model: &P,
    problem: &EstimationProblem,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, SamplerTrace), SamplerError> {
    sample_posterior_with(model, problem, cfg, rng, |r| r.random::<f64>().ln())
}

/// [`sample_posterior`] with a custom source of `log u`. The draw happens at
/// every step whether or not the MH test runs, so enabling the test never
/// shifts the noise sequence.
pub fn sample_posterior_with<P, R, U>(
    model: &P,
    problem: &EstimationProblem,
    cfg: &SamplerConfig,
    rng: &mut R,
    mut log_u: U,
) -> Result<(Vec<f64>, SamplerTrace), SamplerError>
where
    P: EnergyPrior + ?Sized,
    R: Rng + ?Sized,
    U: FnMut(&mut R) -> f64,
{
    cfg.validate(model.schedule())?;
    if problem.n() != model.dim() {
        return Err(SamplerError::DimensionMismatch(format!(
            "problem of dimension {} for a prior of dimension {}",
            problem.n(),
            model.dim()
        )));
    }
    let n = model.dim();
    let mut h = rng::normal_vec(rng, n);
    let mut trace = SamplerTrace::default();
    for t in (1..=cfg.t_max).rev() {
        let z = rng::normal_vec(rng, n);
        let lu = log_u(rng);
        let step = transition(model, Some(problem), &h, t, cfg, &z, lu)?;
        trace.steps.push(step.record);
        if !step.state.iter().all(|v| v.is_finite()) {
            return Err(SamplerError::NonFinite { t, trace });
        }
        h = step.state;
    }
    Ok((h, trace))
}
