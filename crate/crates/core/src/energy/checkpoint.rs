use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Architecture, DenoiserNet, EnergyError, EnergyModel, ScheduleSpec, TrainConfig, TrainState,
};
use crate::autodiff::{AdamState, ParamSet, Tensor};
use crate::channel::{ByteReader, ChannelError};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"EMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const PARAM: &str = "param/";
const ADAM_M: &str = "adam.m/";
const ADAM_V: &str = "adam.v/";
const HISTORY: &str = "loss_history";

/// Everything needed to reload a model or continue training it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub arch: Architecture,
    pub schedule: ScheduleSpec,
    pub train_config: Option<TrainConfig>,
    /// Digest of the channel configuration the model was trained on.
    pub dataset_digest: Option<String>,
    pub params: ParamSet<T>,
    pub state: TrainState<T>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    arch: Architecture,
    schedule: ScheduleSpec,
    train_config: Option<TrainConfig>,
    dataset_digest: Option<String>,
    epoch: usize,
    adam_step: u64,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_training(
        model: &EnergyModel<T>,
        state: &TrainState<T>,
        train_config: Option<TrainConfig>,
        dataset_digest: Option<String>,
    ) -> Self {
        Self {
            arch: *model.arch(),
            schedule: model.schedule.spec,
            train_config,
            dataset_digest,
            params: model.params().clone(),
            state: state.clone(),
        }
    }

    /// Rebuilds the model, checking the stored tensors against the architecture.
    pub fn model(&self) -> Result<EnergyModel<T>, EnergyError> {
        let net = DenoiserNet::with_params(self.arch, self.params.clone())?;
        EnergyModel::from_net(net, self.schedule.build()?)
    }

    /// Like [`Checkpoint::model`] but also requires the array size `(n_r, n_t)`.
    pub fn model_for(&self, n_r: usize, n_t: usize) -> Result<EnergyModel<T>, EnergyError> {
        if (self.arch.n_r, self.arch.n_t) != (n_r, n_t) {
            return Err(EnergyError::ArchitectureMismatch(format!(
                "checkpoint is for N_r={}, N_t={}, requested N_r={n_r}, N_t={n_t}",
                self.arch.n_r, self.arch.n_t
            )));
        }
        self.model()
    }
}

fn write_tensor<W: Write, T: Scalar>(w: &mut W, name: &str, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(
    ckpt: &Checkpoint<T>,
    path: impl AsRef<Path>,
) -> Result<(), EnergyError> {
    let meta = serde_json::to_vec(&Meta {
        arch: ckpt.arch,
        schedule: ckpt.schedule,
        train_config: ckpt.train_config,
        dataset_digest: ckpt.dataset_digest.clone(),
        epoch: ckpt.state.epoch,
        adam_step: ckpt.state.adam.step,
    })
    .expect("metadata serializes");
    let mut tensors: Vec<(String, Tensor<T>)> = Vec::new();
    for (prefix, set) in [
        (PARAM, &ckpt.params),
        (ADAM_M, &ckpt.state.adam.m),
        (ADAM_V, &ckpt.state.adam.v),
    ] {
        for (name, t) in set.iter() {
            tensors.push((format!("{prefix}{name}"), t.clone()));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(tensors.len() as u64 + 1).to_le_bytes())?;
    for (name, t) in &tensors {
        write_tensor(&mut w, name, t)?;
    }
    write_tensor::<_, f64>(
        &mut w,
        HISTORY,
        &Tensor::vector(ckpt.state.loss_history.clone()),
    )?;
    w.flush()?;
    Ok(())
}

fn format_err(e: ChannelError) -> EnergyError {
    match e {
        ChannelError::TruncatedFile => EnergyError::Format("file is truncated".into()),
        other => EnergyError::Format(other.to_string()),
    }
}

fn read_tensor(r: &mut ByteReader<'_>) -> Result<(String, Vec<usize>, Vec<f64>), EnergyError> {
    let len = r.u32().map_err(format_err)? as usize;
    let name = std::str::from_utf8(r.take(len).map_err(format_err)?)
        .map_err(|_| EnergyError::Format("tensor name is not UTF-8".into()))?
        .to_string();
    let ndim = r.u32().map_err(format_err)? as usize;
    let mut shape = Vec::with_capacity(ndim.min(8));
    let mut count: usize = 1;
    for _ in 0..ndim {
        let d = r.u64().map_err(format_err)? as usize;
        count = count
            .checked_mul(d)
            .ok_or_else(|| EnergyError::Format(format!("tensor '{name}' is too large")))?;
        shape.push(d);
    }
    let bytes = r.take(
        count
            .checked_mul(8)
            .ok_or_else(|| EnergyError::Format("tensor too large".into()))?,
    );
    let data = bytes
        .map_err(format_err)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((name, shape, data))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, EnergyError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = ByteReader::new(&bytes);
    if r.take(4).map_err(format_err)? != MAGIC {
        return Err(EnergyError::Format("bad magic bytes".into()));
    }
    let version = r.u32().map_err(format_err)?;
    if version != CHECKPOINT_VERSION {
        return Err(EnergyError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.u64().map_err(format_err)? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len).map_err(format_err)?)
        .map_err(|e| EnergyError::Format(format!("metadata: {e}")))?;
    let count = r.u64().map_err(format_err)?;
    let (mut params, mut m, mut v) = (ParamSet::new(), ParamSet::new(), ParamSet::new());
    let mut history = None;
    for _ in 0..count {
        let (name, shape, data) = read_tensor(&mut r)?;
        if name == HISTORY {
            history = Some(data);
            continue;
        }
        let tensor = Tensor::new(&shape, data.into_iter().map(T::of).collect())
            .map_err(|e| EnergyError::Format(e.to_string()))?;
        let (set, key) = if let Some(k) = name.strip_prefix(PARAM) {
            (&mut params, k)
        } else if let Some(k) = name.strip_prefix(ADAM_M) {
            (&mut m, k)
        } else if let Some(k) = name.strip_prefix(ADAM_V) {
            (&mut v, k)
        } else {
            return Err(EnergyError::Format(format!("unknown tensor '{name}'")));
        };
        set.insert(key, tensor)
            .map_err(|e| EnergyError::Format(e.to_string()))?;
    }
    if !r.is_empty() {
        return Err(EnergyError::Format(
            "trailing bytes after last tensor".into(),
        ));
    }
    let loss_history = history.ok_or_else(|| EnergyError::Format("missing loss history".into()))?;
    meta.arch.validate()?;
    meta.arch.check_params(&params)?;
    meta.arch.check_params(&m)?;
    meta.arch.check_params(&v)?;
    Ok(Checkpoint {
        arch: meta.arch,
        schedule: meta.schedule,
        train_config: meta.train_config,
        dataset_digest: meta.dataset_digest,
        params,
        state: TrainState {
            adam: AdamState {
                m,
                v,
                step: meta.adam_step,
            },
            epoch: meta.epoch,
            loss_history,
        },
    })
}
