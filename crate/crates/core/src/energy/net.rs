use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::EnergyError;
use crate::autodiff::{AutodiffError, Graph, NodeId, ParamSet, Tensor};
use crate::rng::{self, tag};
use crate::Scalar;

/// Sign applied to `½‖h - d(h, t)‖²` to form the energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergySign {
    /// `f = -½‖h - d‖²`, always non-positive.
    #[default]
    Negative,
    /// `f = +½‖h - d‖²`.
    Positive,
}

impl EnergySign {
    pub fn factor(self) -> f64 {
        match self {
            EnergySign::Negative => -1.0,
            EnergySign::Positive => 1.0,
        }
    }
}

/// Hyperparameters of the convolutional denoiser `d_θ`.
///
/// The real channel vector `[Re(h_ad); Im(h_ad)]` of length `2 N_r N_t` is
/// viewed as a `[2, N_t, N_r]` row-major field, i.e. each part is the
/// column-stacked `N_r x N_t` angular matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_r: usize,
    pub n_t: usize,
    pub width: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_embed")]
    pub time_embed_dim: usize,
    #[serde(default)]
    pub energy_sign: EnergySign,
}

fn default_kernel() -> usize {
    3
}

fn default_embed() -> usize {
    32
}

impl Architecture {
    pub fn new(n_r: usize, n_t: usize, width: usize) -> Self {
        Self {
            n_r,
            n_t,
            width,
            kernel: default_kernel(),
            time_embed_dim: default_embed(),
            energy_sign: EnergySign::default(),
        }
    }

    /// Length of the real state vector.
    pub fn dim(&self) -> usize {
        2 * self.n_r * self.n_t
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.n_r == 0 || self.n_t == 0 || self.width == 0 {
            return Err(EnergyError::InvalidArchitecture(format!(
                "{self:?} has a zero size"
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(EnergyError::InvalidArchitecture(format!(
                "kernel size {} must be odd",
                self.kernel
            )));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 == 1 {
            return Err(EnergyError::InvalidArchitecture(format!(
                "time embedding dimension {} must be even and at least 2",
                self.time_embed_dim
            )));
        }
        Ok(())
    }

    /// Frequencies of the sinusoidal step embedding, geometric from 1 to 1000.
    pub fn embed_freqs(&self) -> Vec<f64> {
        let half = self.time_embed_dim / 2;
        if half == 1 {
            return vec![1.0];
        }
        (0..half)
            .map(|i| (1000f64.ln() * i as f64 / (half - 1) as f64).exp())
            .collect()
    }

    /// `(name, shape, init bound)` for every parameter tensor.
    pub(crate) fn param_layout(&self) -> Vec<(&'static str, Vec<usize>, f64)> {
        let (w, k, e) = (self.width, self.kernel, self.time_embed_dim);
        let conv_bound = |c_in: usize| 1.0 / ((c_in * k * k) as f64).sqrt();
        vec![
            ("time.weight", vec![w, e], 1.0 / (e as f64).sqrt()),
            ("time.bias", vec![w], 0.0),
            ("conv1.weight", vec![w, 2, k, k], conv_bound(2)),
            ("conv1.bias", vec![w], 0.0),
            ("conv2.weight", vec![w, w, k, k], conv_bound(w)),
            ("conv2.bias", vec![w], 0.0),
            ("conv3.weight", vec![2, w, k, k], 0.1 * conv_bound(w)),
            ("conv3.bias", vec![2], 0.0),
        ]
    }

    /// Fresh parameters: uniform in `±1/√fan_in`, the output layer at a tenth of that, zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> ParamSet<T> {
        let mut rng = rng::stream(seed, &[tag::INIT]);
        let mut params = ParamSet::new();
        for (name, shape, bound) in self.param_layout() {
            let n: usize = shape.iter().product();
            let data = if bound > 0.0 {
                let u = Uniform::new_inclusive(-bound, bound).expect("positive bound");
                (0..n).map(|_| T::of(u.sample(&mut rng))).collect()
            } else {
                vec![T::zero(); n]
            };
            params
                .insert(name, Tensor::new(&shape, data).expect("layout shape"))
                .expect("unique names");
        }
        params
    }

    /// Checks that a parameter set matches this architecture exactly.
    pub fn check_params<T: Scalar>(&self, params: &ParamSet<T>) -> Result<(), EnergyError> {
        let layout = self.param_layout();
        if params.len() != layout.len() {
            return Err(EnergyError::ArchitectureMismatch(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for (name, shape, _) in layout {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(EnergyError::ArchitectureMismatch(format!(
                        "parameter '{name}' has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                None => {
                    return Err(EnergyError::ArchitectureMismatch(format!(
                        "missing parameter '{name}'"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Denoiser parameters plus the architecture they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserNet<T> {
    pub arch: Architecture,
    pub params: ParamSet<T>,
}

impl<T: Scalar> DenoiserNet<T> {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, EnergyError> {
        arch.validate()?;
        Ok(Self {
            arch,
            params: arch.init_params(seed),
        })
    }

    pub fn with_params(arch: Architecture, params: ParamSet<T>) -> Result<Self, EnergyError> {
        arch.validate()?;
        arch.check_params(&params)?;
        Ok(Self { arch, params })
    }
}

/// Names of the per-evaluation graph inputs.
pub(crate) const IN_STATE: &str = "h";
pub(crate) const IN_TIME: &str = "t";
pub(crate) const IN_NOISE: &str = "eps";

/// One graph holding the energy, its input gradient, the per-item training
/// loss and the loss gradient for every parameter.
#[derive(Clone, Debug)]
pub(crate) struct EnergyGraphs<T> {
    pub graph: Graph<T>,
    pub denoised: NodeId,
    pub energy: NodeId,
    pub epsilon: NodeId,
    pub loss: NodeId,
    pub param_grads: Vec<(String, NodeId)>,
}

fn conv_block<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    weight: NodeId,
    bias: NodeId,
) -> Result<NodeId, AutodiffError> {
    let y = g.conv2d(x, weight)?;
    g.bias_add(y, bias)
}

impl<T: Scalar> EnergyGraphs<T> {
    pub fn build(arch: &Architecture) -> Result<Self, AutodiffError> {
        let n = arch.dim();
        let mut g = Graph::new();
        let h = g.input(IN_STATE, &[n]);
        let t = g.input(IN_TIME, &[]);
        let mut p = Vec::new();
        for (name, shape, _) in arch.param_layout() {
            p.push((name.to_string(), g.input(name, &shape)));
        }
        let param = |name: &str| p.iter().find(|(n, _)| n == name).expect("declared").1;

        let freqs = arch.embed_freqs().into_iter().map(T::of).collect();
        let emb = g.sin_cos_embed(t, freqs)?;
        let emb = g.reshape(emb, &[arch.time_embed_dim, 1])?;
        let temb = g.matmul(param("time.weight"), emb)?;
        let temb = g.reshape(temb, &[arch.width])?;
        let temb = g.bias_add(temb, param("time.bias"))?;
        let temb = g.silu(temb)?;

        let x = g.reshape(h, &[2, arch.n_t, arch.n_r])?;
        let a1 = conv_block(&mut g, x, param("conv1.weight"), param("conv1.bias"))?;
        let a1 = g.bias_add(a1, temb)?;
        let a1 = g.silu(a1)?;
        let a2 = conv_block(&mut g, a1, param("conv2.weight"), param("conv2.bias"))?;
        let a2 = g.silu(a2)?;
        let out = conv_block(&mut g, a2, param("conv3.weight"), param("conv3.bias"))?;
        let denoised = g.reshape(out, &[n])?;

        let resid = g.sub(h, denoised)?;
        let sq = g.square(resid)?;
        let ssq = g.sum_all(sq)?;
        let energy = g.scale(ssq, T::of(0.5 * arch.energy_sign.factor()))?;

        let (mut g, eps_grad) = g.gradient(energy, &[h])?;
        let epsilon = eps_grad[0];
        let target = g.input(IN_NOISE, &[n]);
        let diff = g.sub(target, epsilon)?;
        let dsq = g.square(diff)?;
        let loss = g.sum_all(dsq)?;

        let wrt: Vec<NodeId> = p.iter().map(|(_, id)| *id).collect();
        let (graph, grads) = g.gradient(loss, &wrt)?;
        let param_grads = p.into_iter().map(|(n, _)| n).zip(grads).collect();
        Ok(Self {
            graph,
            denoised,
            energy,
            epsilon,
            loss,
            param_grads,
        })
    }
}

/// Standard-normal noise of length `n` drawn from `rng`, in `T`.
pub(crate) fn normal_tensor<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    rng::normal_vec(rng, n).into_iter().map(T::of).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_shapes_and_init() {
        let arch = Architecture::new(4, 8, 16);
        let p: ParamSet<f64> = arch.init_params(1);
        assert_eq!(p.len(), 8);
        assert_eq!(p.get("conv2.weight").unwrap().shape(), &[16, 16, 3, 3]);
        let bound = 0.1 / (16.0 * 9.0f64).sqrt();
        assert!(p
            .get("conv3.weight")
            .unwrap()
            .data()
            .iter()
            .all(|v| v.abs() <= bound));
        assert!(p
            .get("conv1.bias")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(p, arch.init_params(1));
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let arch = Architecture::new(2, 2, 4);
        let other = Architecture::new(2, 2, 8);
        let p: ParamSet<f64> = other.init_params(0);
        assert!(matches!(
            DenoiserNet::with_params(arch, p),
            Err(EnergyError::ArchitectureMismatch(_))
        ));
    }

    #[test]
    fn invalid_architectures() {
        let mut a = Architecture::new(2, 2, 4);
        a.kernel = 2;
        assert!(a.validate().is_err());
        let mut a = Architecture::new(2, 2, 4);
        a.time_embed_dim = 5;
        assert!(a.validate().is_err());
    }
}
