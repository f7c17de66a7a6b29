use serde::{Deserialize, Serialize};

use super::EnergyError;

/// Parameters of a linear β schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            t_max: 100,
            beta_start: 1e-3,
            beta_end: 0.2,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule, EnergyError> {
        linear_schedule(self.t_max, self.beta_start, self.beta_end)
    }
}

/// Diffusion coefficients for steps `1..=T`. Index 0 of each table is step 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// Linearly spaced `β_1 = beta_start ..= β_T = beta_end` and derived tables.
pub fn linear_schedule(
    t_max: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, EnergyError> {
    if t_max == 0 || !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(EnergyError::InvalidRange(format!(
            "need T >= 1 and 0 < beta_start < beta_end < 1, got T={t_max}, [{beta_start}, {beta_end}]"
        )));
    }
    let beta: Vec<f64> = if t_max == 1 {
        vec![beta_start]
    } else {
        (0..t_max)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (t_max - 1) as f64)
            .collect()
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let beta_tilde = (0..t_max)
        .map(|i| {
            let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            (1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]
        })
        .collect();
    Ok(NoiseSchedule {
        spec: ScheduleSpec {
            t_max,
            beta_start,
            beta_end,
        },
        beta,
        alpha,
        alpha_bar,
        beta_tilde,
    })
}

impl NoiseSchedule {
    pub fn t_max(&self) -> usize {
        self.beta.len()
    }

    fn idx(&self, t: usize) -> usize {
        assert!(
            (1..=self.t_max()).contains(&t),
            "step {t} outside 1..={}",
            self.t_max()
        );
        t - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[self.idx(t)]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[self.idx(t)]
        }
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[self.idx(t)]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta_tildes(&self) -> &[f64] {
        &self.beta_tilde
    }
}

/// `√ᾱ_t h0 + √(1-ᾱ_t) ε`.
pub fn forward_diffuse(
    h0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>, EnergyError> {
    if t == 0 || t > schedule.t_max() {
        return Err(EnergyError::IndexOutOfRange {
            t,
            t_max: schedule.t_max(),
        });
    }
    if h0.len() != eps.len() {
        return Err(EnergyError::ShapeMismatch(format!(
            "h0 of length {} with noise of length {}",
            h0.len(),
            eps.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(h0.iter().zip(eps).map(|(&h, &e)| s * h + n * e).collect())
}
