//! Energy-parameterized diffusion prior: noise schedule, convolutional
//! denoiser, energy and its input gradient, training and checkpoints.

mod checkpoint;
mod gaussian;
mod model;
mod net;
mod schedule;
mod train;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gaussian::GaussianEnergy;
pub use model::{EnergyModel, EnergyPrior};
pub use net::{Architecture, DenoiserNet, EnergySign};
pub use schedule::{forward_diffuse, linear_schedule, NoiseSchedule, ScheduleSpec};
pub use train::{resume, train, TrainConfig, TrainOutcome, TrainState};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("step {t} outside 1..={t_max}")]
    IndexOutOfRange { t: usize, t_max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("non-finite training loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
