use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::net::{normal_tensor, EnergyGraphs, IN_NOISE, IN_STATE, IN_TIME};
use super::{forward_diffuse, Architecture, DenoiserNet, EnergyError, NoiseSchedule};
use crate::autodiff::{ParamSet, Tensor};
use crate::Scalar;

/// What a posterior sampler needs from a diffusion prior: the schedule and
/// the scalar energy `f(h, t)` with its input gradient `ε(h, t) = ∇_h f`.
///
/// The log-prior at step `t` is `-f(h, t) / √(1 - ᾱ_t)` up to a constant.
pub trait EnergyPrior: Sync {
    fn schedule(&self) -> &NoiseSchedule;

    /// Length of the state vector.
    fn dim(&self) -> usize;

    fn energy_and_epsilon(&self, h: &[f64], t: usize) -> Result<(f64, Vec<f64>), EnergyError>;

    fn energy(&self, h: &[f64], t: usize) -> Result<f64, EnergyError> {
        Ok(self.energy_and_epsilon(h, t)?.0)
    }

    fn epsilon(&self, h: &[f64], t: usize) -> Result<Vec<f64>, EnergyError> {
        Ok(self.energy_and_epsilon(h, t)?.1)
    }
}

/// Trained denoiser plus its schedule. Cheap to clone; the compiled graph is shared.
#[derive(Clone, Debug)]
pub struct EnergyModel<T> {
    pub net: DenoiserNet<T>,
    pub schedule: NoiseSchedule,
    graphs: Arc<EnergyGraphs<T>>,
}

impl<T: Scalar> EnergyModel<T> {
    pub fn new(
        arch: Architecture,
        schedule: NoiseSchedule,
        seed: u64,
    ) -> Result<Self, EnergyError> {
        Self::from_net(DenoiserNet::new(arch, seed)?, schedule)
    }

    pub fn from_net(net: DenoiserNet<T>, schedule: NoiseSchedule) -> Result<Self, EnergyError> {
        let graphs = Arc::new(EnergyGraphs::build(&net.arch)?);
        Ok(Self {
            net,
            schedule,
            graphs,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.net.arch
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.net.params
    }

    /// Replaces the parameters, keeping the compiled graph.
    pub fn set_params(&mut self, params: ParamSet<T>) -> Result<(), EnergyError> {
        self.net.arch.check_params(&params)?;
        self.net.params = params;
        Ok(())
    }

    fn check(&self, h: &[f64], t: usize) -> Result<(), EnergyError> {
        let n = self.net.arch.dim();
        if h.len() != n {
            return Err(EnergyError::ShapeMismatch(format!(
                "state of length {} for a model of dimension {n}",
                h.len()
            )));
        }
        let t_max = self.schedule.t_max();
        if t == 0 || t > t_max {
            return Err(EnergyError::IndexOutOfRange { t, t_max });
        }
        Ok(())
    }

    fn inputs(&self, h: &[f64], t: usize) -> HashMap<String, Tensor<T>> {
        let tau = t as f64 / self.schedule.t_max() as f64;
        HashMap::from([
            (
                IN_STATE.to_string(),
                Tensor::vector(h.iter().map(|&v| T::of(v)).collect()),
            ),
            (IN_TIME.to_string(), Tensor::scalar(T::of(tau))),
        ])
    }

    /// Denoiser output `d_θ(h, t)`, flattened like `h`.
    pub fn denoise(&self, h: &[f64], t: usize) -> Result<Vec<f64>, EnergyError> {
        self.check(h, t)?;
        let env = self.inputs(h, t);
        let out = self
            .graphs
            .graph
            .evaluate(&(&env, &self.net.params), &[self.graphs.denoised])?;
        Ok(to_f64(&out[0]))
    }

    /// Per-item loss `‖ε - ε_θ(h_t, t)‖²` and its parameter gradient, at a given `h_t`.
    pub fn loss_at(
        &self,
        h_t: &[f64],
        t: usize,
        eps: &[T],
    ) -> Result<(f64, ParamSet<T>), EnergyError> {
        self.check(h_t, t)?;
        if eps.len() != h_t.len() {
            return Err(EnergyError::ShapeMismatch(format!(
                "noise of length {} for state of length {}",
                eps.len(),
                h_t.len()
            )));
        }
        let mut env = self.inputs(h_t, t);
        env.insert(IN_NOISE.to_string(), Tensor::vector(eps.to_vec()));
        let mut outputs = vec![self.graphs.loss];
        outputs.extend(self.graphs.param_grads.iter().map(|(_, id)| *id));
        let mut vals = self
            .graphs
            .graph
            .evaluate(&(&env, &self.net.params), &outputs)?
            .into_iter();
        let loss = vals.next().expect("loss output").item().as_f64();
        let mut grads = ParamSet::new();
        for ((name, _), g) in self.graphs.param_grads.iter().zip(vals) {
            grads.insert(name, g)?;
        }
        Ok((loss, grads))
    }

    /// Loss for one clean sample with given step and noise: `h_t` is formed by forward diffusion.
    pub fn loss_item(
        &self,
        h0: &[f64],
        t: usize,
        eps: &[T],
    ) -> Result<(f64, ParamSet<T>), EnergyError> {
        let eps64: Vec<f64> = eps.iter().map(|v| v.as_f64()).collect();
        let h_t = forward_diffuse(h0, t, &eps64, &self.schedule)?;
        self.loss_at(&h_t, t, eps)
    }

    /// Mini-batch loss: each item draws `t ~ U{1..T}` and `ε ~ N(0, I)` from
    /// `rng` in batch order; the mean loss and mean gradient are returned.
    pub fn loss_ebm<R: Rng + ?Sized>(
        &self,
        batch: &[&[f64]],
        rng: &mut R,
    ) -> Result<(f64, ParamSet<T>), EnergyError> {
        if batch.is_empty() {
            return Err(EnergyError::EmptyBatch);
        }
        let n = self.net.arch.dim();
        let draws: Vec<(usize, Vec<T>)> = batch
            .iter()
            .map(|_| {
                let t = rng.random_range(1..=self.schedule.t_max());
                (t, normal_tensor(rng, n))
            })
            .collect();
        let items: Vec<(f64, ParamSet<T>)> = batch
            .par_iter()
            .zip(draws.par_iter())
            .map(|(h0, (t, eps))| self.loss_item(h0, *t, eps))
            .collect::<Result<_, _>>()?;
        let scale = T::one() / T::of(batch.len() as f64);
        let mut grad = self.net.params.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &items {
            loss += l;
            grad.axpy(scale, g)?;
        }
        Ok((loss / batch.len() as f64, grad))
    }
}

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

impl<T: Scalar> EnergyPrior for EnergyModel<T> {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn dim(&self) -> usize {
        self.net.arch.dim()
    }

    fn energy_and_epsilon(&self, h: &[f64], t: usize) -> Result<(f64, Vec<f64>), EnergyError> {
        self.check(h, t)?;
        let env = self.inputs(h, t);
        let out = self.graphs.graph.evaluate(
            &(&env, &self.net.params),
            &[self.graphs.energy, self.graphs.epsilon],
        )?;
        Ok((out[0].item().as_f64(), to_f64(&out[1])))
    }

    fn energy(&self, h: &[f64], t: usize) -> Result<f64, EnergyError> {
        self.check(h, t)?;
        let env = self.inputs(h, t);
        let out = self
            .graphs
            .graph
            .evaluate(&(&env, &self.net.params), &[self.graphs.energy])?;
        Ok(out[0].item().as_f64())
    }
}
