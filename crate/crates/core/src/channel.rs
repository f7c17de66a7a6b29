//! Clustered geometric MIMO channels, the angular-domain transform and the
//! binary dataset format.
//!
//! Channels follow `H = √(N_r N_t / L) Σ_p g_p a_rx(φ_p) a_tx(θ_p)ᴴ` with
//! unit-norm steering vectors, so `E|h_ij|² = 1`, `g_p ~ CN(0, 1)`, cluster centres uniform in `[-π/3, π/3]` and per-ray
//! Gaussian angle offsets. Arrays are half-wavelength ULAs.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path as FsPath;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{dft_matrix, CMatrix, LinalgError};
use crate::rng::{self, tag};
use crate::{Complex64, ComplexMatrix};

const MAGIC: &[u8; 4] = b"EMDM";
const FORMAT_VERSION: u32 = 1;
const CLUSTER_SPAN: f64 = PI / 3.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error("dataset file is truncated")]
    TruncatedFile,
}

impl From<LinalgError> for ChannelError {
    fn from(e: LinalgError) -> Self {
        ChannelError::DimensionMismatch(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    #[serde(default = "default_clusters")]
    pub n_clusters: usize,
    #[serde(default = "default_rays")]
    pub rays_per_cluster: usize,
    #[serde(default = "default_spread")]
    pub angle_spread_deg: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_clusters() -> usize {
    3
}

fn default_rays() -> usize {
    10
}

fn default_spread() -> f64 {
    5.0
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 4,
            n_clusters: default_clusters(),
            rays_per_cluster: default_rays(),
            angle_spread_deg: default_spread(),
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let counts = [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_clusters", self.n_clusters),
            ("rays_per_cluster", self.rays_per_cluster),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ChannelError::InvalidConfig(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if !(self.angle_spread_deg > 0.0 && self.angle_spread_deg <= 30.0) {
            return Err(ChannelError::InvalidConfig(format!(
                "angle_spread_deg {} outside (0, 30]",
                self.angle_spread_deg
            )));
        }
        Ok(())
    }

    /// Length of the real-valued channel vector, `2 N_r N_t`.
    pub fn real_dim(&self) -> usize {
        2 * self.n_rx * self.n_tx
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// ULA response `exp(j π k sin(angle))`, unnormalized.
pub fn steering_vector(n: usize, angle_rad: f64) -> Vec<Complex64> {
    let s = angle_rad.sin();
    (0..n)
        .map(|k| Complex64::from_polar(1.0, PI * k as f64 * s))
        .collect()
}

/// One propagation path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub aod_rad: f64,
    pub aoa_rad: f64,
}

/// `√(N_r N_t / L) Σ g_p â_rx â_txᴴ` over the given paths, `â = a/√n`.
pub fn channel_from_paths(n_rx: usize, n_tx: usize, paths: &[Path]) -> ComplexMatrix {
    let scale = 1.0 / (paths.len().max(1) as f64).sqrt();
    let mut h = CMatrix::zeros(n_rx, n_tx);
    for p in paths {
        let a_rx = steering_vector(n_rx, p.aoa_rad);
        let a_tx = steering_vector(n_tx, p.aod_rad);
        for i in 0..n_rx {
            for j in 0..n_tx {
                h[(i, j)] += p.gain * a_rx[i] * a_tx[j].conj() * scale;
            }
        }
    }
    h
}

/// Angular-domain representation `h_ad = (F_T ⊗ F_Rᴴ) vec(H)`.
pub fn to_angular(
    h: &ComplexMatrix,
    f_t: &ComplexMatrix,
    f_r: &ComplexMatrix,
) -> Result<Vec<Complex64>, ChannelError> {
    if f_r.rows() != h.rows()
        || f_r.cols() != h.rows()
        || f_t.rows() != h.cols()
        || f_t.cols() != h.cols()
    {
        return Err(ChannelError::DimensionMismatch(format!(
            "channel {}x{} with DFTs {}x{} (rx) and {}x{} (tx)",
            h.rows(),
            h.cols(),
            f_r.rows(),
            f_r.cols(),
            f_t.rows(),
            f_t.cols()
        )));
    }
    // (F_T ⊗ F_Rᴴ) vec(H) = vec(F_Rᴴ H F_Tᵀ)
    Ok(f_r
        .conj_transpose()
        .matmul(h)?
        .matmul(&f_t.transpose())?
        .vec())
}

/// Spatial channel from its angular representation, `vec(H) = (F_Tᴴ ⊗ F_R) h_ad`.
pub fn from_angular(
    h_ad: &[Complex64],
    f_t: &ComplexMatrix,
    f_r: &ComplexMatrix,
) -> Result<ComplexMatrix, ChannelError> {
    let (n_r, n_t) = (f_r.rows(), f_t.rows());
    let x = CMatrix::from_vec(n_r, n_t, h_ad)?;
    // vec(F_R X F_T^*) with F_T^* the entrywise conjugate = (F_Tᴴ)ᵀ
    Ok(f_r.matmul(&x)?.matmul(&f_t.conj_transpose().transpose())?)
}

/// `[Re(z); Im(z)]`.
pub fn to_real(z: &[Complex64]) -> Vec<f64> {
    z.iter()
        .map(|c| c.re)
        .chain(z.iter().map(|c| c.im))
        .collect()
}

pub fn from_real(v: &[f64]) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSample {
    pub h_spatial: ComplexMatrix,
    pub h_angular: Vec<Complex64>,
}

impl ChannelSample {
    /// Builds a sample from its angular representation; the spatial matrix is derived.
    pub fn from_angular(
        n_rx: usize,
        n_tx: usize,
        h_angular: Vec<Complex64>,
    ) -> Result<Self, ChannelError> {
        let h_spatial = from_angular(&h_angular, &dft_matrix(n_tx), &dft_matrix(n_rx))?;
        Ok(Self {
            h_spatial,
            h_angular,
        })
    }

    /// Real training vector `[Re(h_ad); Im(h_ad)]`.
    pub fn real_vector(&self) -> Vec<f64> {
        to_real(&self.h_angular)
    }
}

/// Draws one channel from the clustered model.
pub fn generate_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> ChannelSample {
    let center = Uniform::new_inclusive(-CLUSTER_SPAN, CLUSTER_SPAN).expect("valid range");
    let spread = Normal::new(0.0, cfg.angle_spread_deg.to_radians()).expect("valid spread");
    let clamp = |a: f64| a.clamp(-PI / 2.0, PI / 2.0);
    let mut paths = Vec::with_capacity(cfg.n_clusters * cfg.rays_per_cluster);
    for _ in 0..cfg.n_clusters {
        let aod_c = center.sample(rng);
        let aoa_c = center.sample(rng);
        for _ in 0..cfg.rays_per_cluster {
            let aod = clamp(aod_c + spread.sample(rng));
            let aoa = clamp(aoa_c + spread.sample(rng));
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            paths.push(Path {
                gain: Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2,
                aod_rad: aod,
                aoa_rad: aoa,
            });
        }
    }
    let h = channel_from_paths(cfg.n_rx, cfg.n_tx, &paths);
    let h_ad =
        to_angular(&h, &dft_matrix(cfg.n_tx), &dft_matrix(cfg.n_rx)).expect("matching DFT sizes");
    ChannelSample::from_angular(cfg.n_rx, cfg.n_tx, h_ad).expect("matching DFT sizes")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Metadata stored as the JSON blob of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    config: ChannelConfig,
    splits: SplitSizes,
}

/// Samples ordered train, validation, test.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDataset {
    pub config: ChannelConfig,
    pub splits: SplitSizes,
    pub samples: Vec<ChannelSample>,
    /// Factor already applied to every sample.
    pub normalization_scale: f64,
}

impl ChannelDataset {
    /// Generates all splits in parallel, one stream per sample index, then
    /// normalizes by a single scale measured on the training split.
    pub fn generate(config: ChannelConfig, splits: SplitSizes) -> Result<Self, ChannelError> {
        config.validate()?;
        if splits.train == 0 {
            return Err(ChannelError::InvalidConfig(
                "training split is empty".into(),
            ));
        }
        let raw: Vec<ChannelSample> = (0..splits.total())
            .into_par_iter()
            .map(|i| {
                generate_channel(
                    &config,
                    &mut rng::stream(config.seed, &[tag::CHANNEL, i as u64]),
                )
            })
            .collect();
        let mut ds = Self {
            config,
            splits,
            samples: raw,
            normalization_scale: 1.0,
        };
        let power = ds.mean_entry_power(0..splits.train);
        ds.rescale(1.0 / power.sqrt())?;
        Ok(ds)
    }

    /// Mean of `|h_ij|²` over the given sample range.
    pub fn mean_entry_power(&self, range: std::ops::Range<usize>) -> f64 {
        let n = range.len();
        let per = self.config.n_rx * self.config.n_tx;
        let total: f64 = self.samples[range]
            .iter()
            .map(|s| s.h_spatial.data().iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        total / (n * per) as f64
    }

    fn rescale(&mut self, factor: f64) -> Result<(), ChannelError> {
        let (n_rx, n_tx) = (self.config.n_rx, self.config.n_tx);
        for s in &mut self.samples {
            let scaled: Vec<Complex64> = s.h_angular.iter().map(|z| z * factor).collect();
            *s = ChannelSample::from_angular(n_rx, n_tx, scaled)?;
        }
        self.normalization_scale *= factor;
        Ok(())
    }

    pub fn train(&self) -> &[ChannelSample] {
        &self.samples[..self.splits.train]
    }

    pub fn val(&self) -> &[ChannelSample] {
        &self.samples[self.splits.train..self.splits.train + self.splits.val]
    }

    pub fn test(&self) -> &[ChannelSample] {
        &self.samples[self.splits.train + self.splits.val..]
    }

    /// Real training vectors of the training split.
    pub fn train_vectors(&self) -> Vec<Vec<f64>> {
        self.train()
            .iter()
            .map(ChannelSample::real_vector)
            .collect()
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<(), ChannelError> {
        let mut w = BufWriter::new(File::create(path)?);
        let meta = serde_json::to_vec(&DatasetMeta {
            config: self.config.clone(),
            splits: self.splits,
        })
        .expect("metadata serializes");
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.config.n_rx as u32).to_le_bytes())?;
        w.write_all(&(self.config.n_tx as u32).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&[8u8])?;
        w.write_all(&self.normalization_scale.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        for s in &self.samples {
            for z in &s.h_angular {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, ChannelError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader::new(&bytes);
        if r.take(4)? != MAGIC {
            return Err(ChannelError::Format("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ChannelError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let n_rx = r.u32()? as usize;
        let n_tx = r.u32()? as usize;
        let count = r.u64()? as usize;
        let width = r.take(1)?[0];
        if width != 8 {
            return Err(ChannelError::Format(format!(
                "unsupported float width {width}"
            )));
        }
        let normalization_scale = r.f64()?;
        let meta_len = r.u64()? as usize;
        let meta: DatasetMeta = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| ChannelError::Format(format!("metadata: {e}")))?;
        if meta.config.n_rx != n_rx || meta.config.n_tx != n_tx || meta.splits.total() != count {
            return Err(ChannelError::Format(
                "header disagrees with metadata".into(),
            ));
        }
        let per = n_rx * n_tx;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let mut h_ad = Vec::with_capacity(per);
            for _ in 0..per {
                let re = r.f64()?;
                let im = r.f64()?;
                h_ad.push(Complex64::new(re, im));
            }
            samples.push(ChannelSample::from_angular(n_rx, n_tx, h_ad)?);
        }
        if !r.is_empty() {
            return Err(ChannelError::Format(
                "trailing bytes after last sample".into(),
            ));
        }
        Ok(Self {
            config: meta.config,
            splits: meta.splits,
            samples,
            normalization_scale,
        })
    }
}

/// Little-endian cursor over a byte slice; running out is [`ChannelError::TruncatedFile`].
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], ChannelError> {
        let end = self.pos.checked_add(n).ok_or(ChannelError::TruncatedFile)?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(ChannelError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ChannelError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, ChannelError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, ChannelError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
