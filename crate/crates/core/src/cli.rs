//! Command-line front end for the `emdm` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bench::{
    self, fixed_pilot_seed, run_with_context, to_db, BenchContext, BenchError, Estimator,
    ExperimentConfig, Instance,
};
use crate::channel::{ChannelConfig, ChannelDataset, SplitSizes};
use crate::energy::{
    load_checkpoint, resume, save_checkpoint, Architecture, Checkpoint, EnergyModel, EnergySign,
    ScheduleSpec, TrainConfig, TrainState,
};
use crate::sampler::SamplerConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "emdm",
    version,
    about = "MIMO channel estimation with an energy-based diffusion prior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a channel dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the energy model on a dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint already at `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Estimate one channel and print its NMSE.
    Estimate {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Dataset whose test split supplies the channel.
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "snr-db", allow_negative_numbers = true)]
        snr_db: f64,
        #[arg(long = "np")]
        n_p: usize,
        #[arg(long)]
        seed: u64,
        /// Index into the test split, taken modulo its size.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Accept every proposal.
        #[arg(long)]
        no_mh: bool,
        /// rls, lmmse, dm-unadjusted or dm-mh; defaults to the diffusion sampler.
        #[arg(long)]
        estimator: Option<String>,
        /// Pilot seed when it differs from `--seed`.
        #[arg(long)]
        pilot_seed: Option<u64>,
        /// Base seed of a `fixed_pilots` benchmark; derives the pilot seed for `--np`.
        #[arg(long, conflicts_with = "pilot_seed")]
        fixed_pilots_base: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        grad_scale_s: f64,
        #[arg(long)]
        ddpm_std_sqrt: bool,
        #[arg(long, default_value_t = 1)]
        num_chains: usize,
        #[arg(long, default_value_t = 0.0)]
        lmmse_ridge: f64,
    },
    /// Run an SNR and pilot-density sweep and write a CSV of results.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Contents of the `gen-data` config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default)]
    pub channel: ChannelConfig,
    pub splits: SplitSizes,
}

/// Denoiser size and sign; the array size comes from the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
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

/// Contents of the `train` config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub arch: ArchSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub train: TrainConfig,
    /// Seed of the initial weights.
    #[serde(default)]
    pub init_seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{0}")]
    Runtime(String),
}

macro_rules! runtime {
    ($e:expr) => {
        $e.map_err(|e| CliError::Runtime(e.to_string()))
    };
}

fn load_dataset(path: &Path) -> Result<ChannelDataset, CliError> {
    ChannelDataset::load(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text =
        runtime!(std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData { config, out } => gen_data(&config, &out),
        Command::Train {
            data,
            config,
            out,
            resume,
        } => train_cmd(&data, &config, &out, resume),
        Command::Estimate {
            ckpt,
            data,
            snr_db,
            n_p,
            seed,
            trial,
            no_mh,
            estimator,
            pilot_seed,
            fixed_pilots_base,
            grad_scale_s,
            ddpm_std_sqrt,
            num_chains,
            lmmse_ridge,
        } => {
            let est = match estimator {
                Some(name) => name
                    .parse::<Estimator>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
                None if no_mh => Estimator::DmUnadjusted,
                None => Estimator::DmMh,
            };
            if no_mh && est == Estimator::DmMh {
                return Err(CliError::Usage(
                    "--no-mh conflicts with --estimator dm-mh".into(),
                ));
            }
            if n_p == 0 || num_chains == 0 {
                return Err(CliError::Usage(
                    "--np and --num-chains must be at least 1".into(),
                ));
            }
            let pilot_seed = match (pilot_seed, fixed_pilots_base) {
                (Some(p), _) => p,
                (None, Some(base)) => fixed_pilot_seed(base, n_p),
                (None, None) => seed,
            };
            let inst = Instance {
                snr_db,
                n_p,
                trial,
                seed,
                pilot_seed,
            };
            let sampler = SamplerConfig {
                grad_scale_s,
                ddpm_std_sqrt,
                ..SamplerConfig::default()
            };
            estimate(
                ckpt.as_deref(),
                &data,
                est,
                &inst,
                sampler,
                num_chains,
                lmmse_ridge,
            )
        }
        Command::Benchmark { config, out } => benchmark(&config, &out),
    }
}

fn gen_data(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: GenDataConfig = read_json(config)?;
    let ds = runtime!(ChannelDataset::generate(cfg.channel, cfg.splits))?;
    runtime!(ds.save(out))?;
    println!(
        "wrote {} channels ({} train, {} val, {} test) to {}",
        ds.samples.len(),
        ds.splits.train,
        ds.splits.val,
        ds.splits.test,
        out.display()
    );
    Ok(())
}

fn train_cmd(data: &Path, config: &Path, out: &Path, resume_run: bool) -> Result<(), CliError> {
    let job: TrainJob = read_json(config)?;
    let ds = load_dataset(data)?;
    let digest = ds.config.digest();
    let (model, state) = if resume_run {
        let ckpt = runtime!(load_checkpoint::<f64>(out))?;
        if ckpt.dataset_digest.as_deref() != Some(digest.as_str()) {
            return Err(CliError::Runtime(
                "checkpoint was trained on a different dataset".into(),
            ));
        }
        (
            runtime!(ckpt.model_for(ds.config.n_rx, ds.config.n_tx))?,
            ckpt.state,
        )
    } else {
        let arch = Architecture {
            n_r: ds.config.n_rx,
            n_t: ds.config.n_tx,
            width: job.arch.width,
            kernel: job.arch.kernel,
            time_embed_dim: job.arch.time_embed_dim,
            energy_sign: job.arch.energy_sign,
        };
        let schedule = runtime!(job.schedule.build())?;
        let model = runtime!(EnergyModel::<f64>::new(arch, schedule, job.init_seed))?;
        let state = TrainState::fresh(&model);
        (model, state)
    };
    let vectors = ds.train_vectors();
    let outcome = runtime!(resume(model, state, &vectors, &job.train, |m, s| {
        let ckpt = Checkpoint::from_training(m, s, Some(job.train), Some(digest.clone()));
        save_checkpoint(&ckpt, out)?;
        let last = s.loss_history.last().copied().unwrap_or(f64::NAN);
        println!("epoch {} loss {last:.6}", s.epoch);
        Ok(())
    }))?;
    println!(
        "trained {} epochs, checkpoint at {}",
        outcome.state.epoch,
        out.display()
    );
    Ok(())
}

fn estimate(
    ckpt: Option<&Path>,
    data: &Path,
    est: Estimator,
    inst: &Instance,
    sampler: SamplerConfig,
    num_chains: usize,
    lmmse_ridge: f64,
) -> Result<(), CliError> {
    let ds = load_dataset(data)?;
    let model = if est.needs_model() {
        let path = ckpt.ok_or_else(|| CliError::Usage(format!("{est} needs --ckpt")))?;
        let c = load_checkpoint::<f64>(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Some(runtime!(c.model_for(ds.config.n_rx, ds.config.n_tx))?)
    } else {
        None
    };
    let ridge = (est == Estimator::Lmmse).then_some(lmmse_ridge);
    let ctx = BenchContext::new(ds, model, ridge, sampler, num_chains)?;
    let row = ctx.run_instance(inst, &[est], false)?.remove(0);
    println!("nmse {:.16e} ({:.3} dB)", row.nmse, to_db(row.nmse));
    Ok(())
}

fn benchmark(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let ctx = BenchContext::from_config(&cfg)?;
    let file = runtime!(File::create(out))?;
    let rows = run_with_context(&ctx, &cfg, BufWriter::new(file))?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for (e, snr, n_p, db) in bench::summarize(&rows) {
        runtime!(writeln!(
            w,
            "{e:>14} snr {snr:>6.1} dB  n_p {n_p:>3}  nmse {db:>8.3} dB"
        ))?;
    }
    Ok(())
}
