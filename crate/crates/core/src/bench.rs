//! SNR and pilot-density sweeps over a test split, one CSV row per
//! estimator and trial.

use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{lmmse_estimate, lmmse_fit, rls_estimate, BaselineError, LmmseModel};
use crate::channel::{ChannelDataset, ChannelError};
use crate::energy::{load_checkpoint, EnergyError, EnergyModel};
use crate::linalg::norm_sq;
use crate::measurement::{
    gen_pilots, measurement_operator, sigma2_from_snr, synthesize, MeasurementError, SnrSpec,
};
use crate::rng::{self, tag};
use crate::sampler::{sample_posterior, SamplerConfig, SamplerError};

pub const CSV_HEADER: &str = "estimator,snr_db,n_p,alpha,trial,seed,nmse,wall_time_ms";

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "EMDM_THREADS";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("reference channel has zero norm")]
    ZeroReference,
    #[error("diffusion estimators need a checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("invalid experiment configuration: {0}")]
    ConfigError(String),
    #[error("length mismatch: estimate {estimate}, reference {reference}")]
    LengthMismatch { estimate: usize, reference: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "rls")]
    Rls,
    #[serde(rename = "lmmse")]
    Lmmse,
    #[serde(rename = "dm-unadjusted")]
    DmUnadjusted,
    #[serde(rename = "dm-mh")]
    DmMh,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Rls,
        Estimator::Lmmse,
        Estimator::DmUnadjusted,
        Estimator::DmMh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Rls => "rls",
            Estimator::Lmmse => "lmmse",
            Estimator::DmUnadjusted => "dm-unadjusted",
            Estimator::DmMh => "dm-mh",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Estimator::DmUnadjusted | Estimator::DmMh)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Estimator {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| BenchError::ConfigError(format!("unknown estimator '{s}'")))
    }
}

/// One sweep. Relative paths are resolved against the config file's directory
/// by [`ExperimentConfig::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub estimators: Vec<Estimator>,
    pub snr_db: Vec<f64>,
    pub n_p: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_scale")]
    pub grad_scale_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Draw one pilot matrix per `N_p` instead of one per trial.
    #[serde(default)]
    pub fixed_pilots: bool,
    /// Independent sampler runs averaged into one diffusion estimate.
    #[serde(default = "default_chains")]
    pub num_chains: usize,
    #[serde(default)]
    pub ddpm_std_sqrt: bool,
    /// Diagonal loading added to the sample covariance used by LMMSE.
    #[serde(default)]
    pub lmmse_ridge: f64,
    /// When false every `wall_time_ms` is written as 0, making runs byte-identical.
    #[serde(default = "default_true")]
    pub record_wall_time: bool,
}

fn default_trials() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

fn default_chains() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| BenchError::ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset = base.join(&cfg.dataset);
        cfg.checkpoint = cfg.checkpoint.map(|c| base.join(c));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::ConfigError(m.to_string()));
        if self.estimators.is_empty() {
            return bad("estimator list is empty");
        }
        if self.snr_db.is_empty() || self.n_p.is_empty() {
            return bad("snr_db and n_p grids must be nonempty");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite");
        }
        if self.n_p.contains(&0) {
            return bad("n_p values must be at least 1");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.num_chains == 0 {
            return bad("num_chains must be at least 1");
        }
        if !(self.grad_scale_s > 0.0 && self.grad_scale_s.is_finite()) {
            return bad("grad_scale_s must be positive");
        }
        if self.lmmse_ridge.is_nan() || self.lmmse_ridge < 0.0 {
            return bad("lmmse_ridge must be non-negative");
        }
        if self.estimators.iter().any(|e| e.needs_model()) && self.checkpoint.is_none() {
            return Err(BenchError::MissingCheckpoint(
                "no checkpoint path configured".into(),
            ));
        }
        Ok(())
    }

    /// Sampler settings shared by both diffusion estimators; MH is set per estimator.
    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            grad_scale_s: self.grad_scale_s,
            ddpm_std_sqrt: self.ddpm_std_sqrt,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub estimator: Estimator,
    pub snr_db: f64,
    pub n_p: usize,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub nmse: f64,
    pub wall_time_ms: f64,
}

impl ResultRow {
    /// CSV line without the trailing newline, reals with 17 significant digits.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{},{:.16e},{},{},{:.16e},{:.16e}",
            self.estimator,
            self.snr_db,
            self.n_p,
            self.alpha,
            self.trial,
            self.seed,
            self.nmse,
            self.wall_time_ms
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self, BenchError> {
        let f: Vec<&str> = line.trim_end_matches('\n').split(',').collect();
        if f.len() != 8 {
            return Err(BenchError::ConfigError(format!(
                "expected 8 fields, got {}",
                f.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| BenchError::ConfigError(format!("bad number '{s}': {e}")))
        };
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| BenchError::ConfigError(format!("bad integer '{s}': {e}")))
        };
        Ok(Self {
            estimator: f[0].parse()?,
            snr_db: num(f[1])?,
            n_p: int(f[2])? as usize,
            alpha: num(f[3])?,
            trial: int(f[4])? as usize,
            seed: int(f[5])?,
            nmse: num(f[6])?,
            wall_time_ms: num(f[7])?,
        })
    }
}

/// `‖ĥ - h‖² / ‖h‖²`.
pub fn nmse(h_hat: &[f64], h_true: &[f64]) -> Result<f64, BenchError> {
    if h_hat.len() != h_true.len() {
        return Err(BenchError::LengthMismatch {
            estimate: h_hat.len(),
            reference: h_true.len(),
        });
    }
    let reference = norm_sq(h_true);
    if reference == 0.0 {
        return Err(BenchError::ZeroReference);
    }
    let err: f64 = h_hat
        .iter()
        .zip(h_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(err / reference)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Seed naming one `(snr, N_p, trial)` instance, shared by every estimator.
pub fn instance_seed(base: u64, snr_db: f64, n_p: usize, trial: usize) -> u64 {
    rng::stream(
        base,
        &[tag::TRIAL, snr_db.to_bits(), n_p as u64, trial as u64],
    )
    .random()
}

/// Seed of the pilot matrix used under `fixed_pilots`.
pub fn fixed_pilot_seed(base: u64, n_p: usize) -> u64 {
    rng::stream(base, &[tag::PILOTS, n_p as u64]).random()
}

/// One estimation instance: test channel `trial mod n_test`, pilots from
/// `pilot_seed`, noise and sampler randomness from `seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instance {
    pub snr_db: f64,
    pub n_p: usize,
    pub trial: usize,
    pub seed: u64,
    pub pilot_seed: u64,
}

/// Dataset, fitted baselines and the optional diffusion model.
pub struct BenchContext {
    pub dataset: ChannelDataset,
    pub lmmse: Option<LmmseModel>,
    pub model: Option<EnergyModel<f64>>,
    pub sampler: SamplerConfig,
    pub num_chains: usize,
}

impl BenchContext {
    pub fn new(
        dataset: ChannelDataset,
        model: Option<EnergyModel<f64>>,
        lmmse_ridge: Option<f64>,
        sampler: SamplerConfig,
        num_chains: usize,
    ) -> Result<Self, BenchError> {
        if dataset.splits.test == 0 {
            return Err(BenchError::ConfigError(
                "dataset has an empty test split".into(),
            ));
        }
        if let Some(m) = &model {
            let (n_r, n_t) = (dataset.config.n_rx, dataset.config.n_tx);
            if (m.arch().n_r, m.arch().n_t) != (n_r, n_t) {
                return Err(EnergyError::ArchitectureMismatch(format!(
                    "model is for N_r={}, N_t={}, dataset has N_r={n_r}, N_t={n_t}",
                    m.arch().n_r,
                    m.arch().n_t
                ))
                .into());
            }
        }
        let lmmse = match lmmse_ridge {
            Some(r) => Some(lmmse_fit(&dataset.train_vectors(), r)?),
            None => None,
        };
        Ok(Self {
            dataset,
            lmmse,
            model,
            sampler,
            num_chains,
        })
    }

    /// Loads everything `cfg` refers to.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, BenchError> {
        cfg.validate()?;
        let dataset = ChannelDataset::load(&cfg.dataset)?;
        let model = if cfg.estimators.iter().any(|e| e.needs_model()) {
            let path = cfg.checkpoint.as_ref().expect("validated");
            if !path.exists() {
                return Err(BenchError::MissingCheckpoint(path.display().to_string()));
            }
            let ckpt = load_checkpoint::<f64>(path)?;
            Some(ckpt.model_for(dataset.config.n_rx, dataset.config.n_tx)?)
        } else {
            None
        };
        let ridge = cfg
            .estimators
            .contains(&Estimator::Lmmse)
            .then_some(cfg.lmmse_ridge);
        Self::new(dataset, model, ridge, cfg.sampler(), cfg.num_chains)
    }

    pub fn n_t(&self) -> usize {
        self.dataset.config.n_tx
    }

    /// Runs the listed estimators on one instance, returning one row each.
    pub fn run_instance(
        &self,
        inst: &Instance,
        estimators: &[Estimator],
        record_wall_time: bool,
    ) -> Result<Vec<ResultRow>, BenchError> {
        let cfg = &self.dataset.config;
        let test = self.dataset.test();
        let h0 = test[inst.trial % test.len()].real_vector();
        let pilots = gen_pilots(
            cfg.n_tx,
            inst.n_p,
            inst.pilot_seed,
            &mut rng::stream(inst.pilot_seed, &[tag::PILOTS]),
        );
        let op = Arc::new(measurement_operator(&pilots, cfg.n_rx)?);
        let sigma2 = sigma2_from_snr(
            SnrSpec {
                snr_db: inst.snr_db,
            },
            cfg.n_tx,
        );
        let problem = synthesize(&h0, &op, sigma2, &mut rng::stream(inst.seed, &[tag::NOISE]))?;
        let alpha = inst.n_p as f64 / cfg.n_tx as f64;

        estimators
            .iter()
            .map(|&est| {
                let start = Instant::now();
                let h_hat = match est {
                    Estimator::Rls => rls_estimate(&problem)?,
                    Estimator::Lmmse => {
                        let m = self.lmmse.as_ref().ok_or_else(|| {
                            BenchError::ConfigError("lmmse statistics were not fitted".into())
                        })?;
                        lmmse_estimate(m, &problem)?
                    }
                    Estimator::DmUnadjusted | Estimator::DmMh => {
                        let model = self.model.as_ref().ok_or_else(|| {
                            BenchError::MissingCheckpoint("no model loaded".into())
                        })?;
                        let sc = SamplerConfig {
                            mh_enabled: est == Estimator::DmMh,
                            seed: inst.seed,
                            ..self.sampler
                        };
                        let mut mean = vec![0.0; h0.len()];
                        for chain in 0..self.num_chains {
                            let mut r = rng::stream(inst.seed, &[tag::SAMPLER, chain as u64]);
                            let (h, _) = sample_posterior(model, &problem, &sc, &mut r)?;
                            for (m, v) in mean.iter_mut().zip(h) {
                                *m += v / self.num_chains as f64;
                            }
                        }
                        mean
                    }
                };
                let wall_time_ms = if record_wall_time {
                    start.elapsed().as_secs_f64() * 1e3
                } else {
                    0.0
                };
                Ok(ResultRow {
                    estimator: est,
                    snr_db: inst.snr_db,
                    n_p: inst.n_p,
                    alpha,
                    trial: inst.trial,
                    seed: inst.seed,
                    nmse: nmse(&h_hat, &h0)?,
                    wall_time_ms,
                })
            })
            .collect()
    }
}

/// Grid instances in output order: SNR, then `N_p`, then trial.
pub fn instances(cfg: &ExperimentConfig) -> Vec<Instance> {
    let mut out = Vec::with_capacity(cfg.snr_db.len() * cfg.n_p.len() * cfg.trials);
    for &snr_db in &cfg.snr_db {
        for &n_p in &cfg.n_p {
            for trial in 0..cfg.trials {
                let seed = instance_seed(cfg.seed, snr_db, n_p, trial);
                let pilot_seed = if cfg.fixed_pilots {
                    fixed_pilot_seed(cfg.seed, n_p)
                } else {
                    seed
                };
                out.push(Instance {
                    snr_db,
                    n_p,
                    trial,
                    seed,
                    pilot_seed,
                });
            }
        }
    }
    out
}

/// Worker count from [`THREADS_ENV`], falling back to the machine's parallelism.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the whole grid, streaming rows to `out` in grid order as each batch of
/// instances completes. Rows for one instance appear in the configured
/// estimator order.
pub fn run_benchmark<W: Write>(
    cfg: &ExperimentConfig,
    out: W,
) -> Result<Vec<ResultRow>, BenchError> {
    let ctx = BenchContext::from_config(cfg)?;
    run_with_context(&ctx, cfg, out)
}

pub fn run_with_context<W: Write>(
    ctx: &BenchContext,
    cfg: &ExperimentConfig,
    mut out: W,
) -> Result<Vec<ResultRow>, BenchError> {
    cfg.validate()?;
    let threads = worker_threads();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BenchError::ConfigError(e.to_string()))?;
    writeln!(out, "{CSV_HEADER}")?;
    out.flush()?;
    let grid = instances(cfg);
    let mut rows = Vec::with_capacity(grid.len() * cfg.estimators.len());
    for batch in grid.chunks(threads.max(1)) {
        let done: Vec<Result<Vec<ResultRow>, BenchError>> = pool.install(|| {
            batch
                .par_iter()
                .map(|inst| ctx.run_instance(inst, &cfg.estimators, cfg.record_wall_time))
                .collect()
        });
        for r in done {
            for row in r? {
                writeln!(out, "{}", row.to_csv())?;
                rows.push(row);
            }
        }
        out.flush()?;
    }
    Ok(rows)
}

/// Mean NMSE in dB per `(estimator, snr, N_p)`, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<(Estimator, f64, usize, f64)> {
    let mut acc: Vec<(Estimator, f64, usize, f64, usize)> = Vec::new();
    for r in rows {
        match acc
            .iter_mut()
            .find(|a| a.0 == r.estimator && a.1 == r.snr_db && a.2 == r.n_p)
        {
            Some(a) => {
                a.3 += r.nmse;
                a.4 += 1;
            }
            None => acc.push((r.estimator, r.snr_db, r.n_p, r.nmse, 1)),
        }
    }
    acc.into_iter()
        .map(|(e, s, n, sum, k)| (e, s, n, to_db(sum / k as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_basics() {
        let h = [1.0, -2.0, 0.5];
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert_eq!(nmse(&[0.0; 3], &h).unwrap(), 1.0);
        let twice: Vec<f64> = h.iter().map(|v| 2.0 * v).collect();
        assert_eq!(nmse(&twice, &h).unwrap(), 1.0);
        assert!(matches!(
            nmse(&h, &[0.0; 3]),
            Err(BenchError::ZeroReference)
        ));
    }

    #[test]
    fn csv_row_round_trips() {
        let row = ResultRow {
            estimator: Estimator::DmMh,
            snr_db: 12.5,
            n_p: 5,
            alpha: 0.625,
            trial: 3,
            seed: u64::MAX,
            nmse: 0.123_456_789_012_345_68,
            wall_time_ms: 0.0,
        };
        let line = row.to_csv();
        assert_eq!(line.split(',').count(), 8);
        assert_eq!(ResultRow::parse_csv(&line).unwrap(), row);
    }

    #[test]
    fn instance_seed_ignores_estimator_and_varies_by_point() {
        let a = instance_seed(1, 10.0, 5, 0);
        assert_eq!(a, instance_seed(1, 10.0, 5, 0));
        assert_ne!(a, instance_seed(1, 15.0, 5, 0));
        assert_ne!(a, instance_seed(1, 10.0, 6, 0));
        assert_ne!(a, instance_seed(1, 10.0, 5, 1));
    }

    #[test]
    fn estimator_names_parse() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        assert!("omp".parse::<Estimator>().is_err());
    }
}
