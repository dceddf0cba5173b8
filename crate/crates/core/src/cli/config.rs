//! Run configuration: command-line flags layered over a flat `run.toml`
//! layered over presets and the built-in defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datapipe::DEFAULT_TRAIN_FRACTION;
use crate::error::{Error, Result};
use crate::gantrain::TrainConfig;

/// Slices taken from each volume when reading real data.
pub const DEFAULT_SLICES_PER_VOLUME: usize = 10;
pub const DEFAULT_IMAGE_SIZE: usize = 256;
pub const DEFAULT_DCGAN_IMAGE_SIZE: usize = 64;
pub const DEFAULT_OUTPUT_DIR: &str = "fieldshift-out";

/// The `--phantom-smoke` preset: 23 phantoms per domain (16 train / 7 test)
/// at 64x64, trained for 25 epochs of 4 batches = 100 steps.
pub const SMOKE_PHANTOM: PhantomSpec = PhantomSpec { n: 23, size: 64, seed: 0 };
pub const SMOKE_EPOCHS: usize = 25;

/// Synthetic data request: `n` phantoms per domain of `size` x `size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhantomSpec {
    pub n: usize,
    pub size: usize,
    pub seed: u64,
}

impl FromStr for PhantomSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || format!("expected N,SIZE,SEED (e.g. 16,64,7), got {s:?}");
        match parts.as_slice() {
            [n, size, seed] => Ok(Self {
                n: n.parse().map_err(|_| bad())?,
                size: size.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for PhantomSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<PhantomSpec> for String {
    fn from(p: PhantomSpec) -> String {
        p.to_string()
    }
}

impl fmt::Display for PhantomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.n, self.size, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ModelChoice {
    /// CycleGAN between 3T (source) and 1.5T (target)
    #[value(name = "cyclegan")]
    #[serde(rename = "cyclegan")]
    CycleGan,
    /// DCGAN trained on the 1.5T images
    #[value(name = "dcgan-1.5t")]
    #[serde(rename = "dcgan-1.5t")]
    Dcgan1p5T,
    /// DCGAN trained on the 3T images
    #[value(name = "dcgan-3t")]
    #[serde(rename = "dcgan-3t")]
    Dcgan3T,
}

impl ModelChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelChoice::CycleGan => "cyclegan",
            ModelChoice::Dcgan1p5T => "dcgan-1.5t",
            ModelChoice::Dcgan3T => "dcgan-3t",
        }
    }

    pub fn default_image_size(self) -> usize {
        match self {
            ModelChoice::CycleGan => DEFAULT_IMAGE_SIZE,
            _ => DEFAULT_DCGAN_IMAGE_SIZE,
        }
    }
}

/// Settings shared by every data-consuming command.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunArgs {
    /// Flat key = value run file; flags override its keys
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Output directory [default: fieldshift-out]
    #[arg(long = "out", value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Seed for splitting, shuffling, initialization and sampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Square slice size in pixels [default: 256; 64 for DCGAN]
    #[arg(long)]
    pub image_size: Option<usize>,
}

/// Where images come from.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// Prepared dataset directory (as written by `prepare`)
    #[arg(long = "data", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Directory of 3T volumes (.nii) or slices (.pgm)
    #[arg(long, value_name = "DIR")]
    pub source_dir: Option<PathBuf>,

    /// Directory of 1.5T volumes (.nii) or slices (.pgm)
    #[arg(long, value_name = "DIR")]
    pub target_dir: Option<PathBuf>,

    /// Synthetic phantoms instead of files: N per domain, SIZE x SIZE, SEED
    #[arg(long, value_name = "N,SIZE,SEED")]
    pub phantom: Option<PhantomSpec>,

    /// Canonical smoke preset: 23 phantoms per domain (16 train), 64x64, 100 steps
    #[arg(long)]
    pub phantom_smoke: bool,

    /// Fraction of slices used for training [default: 0.7]
    #[arg(long)]
    pub train_fraction: Option<f64>,

    /// Keep all slices of a volume on the same side of the split
    #[arg(long)]
    pub by_volume: bool,

    /// Slices extracted per volume [default: 10]
    #[arg(long)]
    pub slices_per_volume: Option<usize>,
}

/// Optimizer and architecture settings.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperArgs {
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Batch size [default: 4]
    #[arg(long = "batch", visible_alias = "batch-size")]
    pub batch_size: Option<usize>,

    /// Adam learning rate [default: 0.0002]
    #[arg(long)]
    pub lr: Option<f64>,

    /// Adam beta1 [default: 0.5]
    #[arg(long)]
    pub beta1: Option<f64>,

    /// Adam beta2 [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,

    /// Cycle-consistency weight lambda [default: 10]
    #[arg(long, visible_alias = "lambda")]
    pub lambda_cyc: Option<f64>,

    /// Identity-loss weight, relative to lambda [default: 0 (off)]
    #[arg(long)]
    pub lambda_identity: Option<f64>,

    /// Image history pool size [default: 50]
    #[arg(long)]
    pub pool_size: Option<usize>,

    /// Save a checkpoint every this many epochs [default: 10]
    #[arg(long)]
    pub checkpoint_every: Option<usize>,

    /// Generator base filters [default: 64]
    #[arg(long)]
    pub base_filters: Option<usize>,

    /// Generator residual blocks [default: 9]
    #[arg(long)]
    pub n_blocks: Option<usize>,

    /// PatchGAN hidden widths, comma separated [default: 64,128,256,512]
    #[arg(long, value_delimiter = ',', value_name = "W,W,..")]
    pub disc_filters: Option<Vec<usize>>,

    /// DCGAN latent dimension [default: 100]
    #[arg(long)]
    pub latent_dim: Option<usize>,

    /// Stop after this many optimizer steps [default: none]
    #[arg(long)]
    pub max_steps: Option<u64>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr; opt: $($o:ident),*; flag: $($b:ident),*) => {{
        let (mut hi, lo) = ($hi, $lo);
        $(hi.$o = hi.$o.or(lo.$o);)*
        $(hi.$b |= lo.$b;)*
        hi
    }};
}

impl RunArgs {
    pub fn or(self, lower: Self) -> Self {
        let config = self.config.clone();
        let mut out = layer!(self, lower; opt: output_dir, seed, image_size; flag: );
        out.config = config;
        out
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

impl DataArgs {
    pub fn or(self, lower: Self) -> Self {
        layer!(self, lower;
            opt: data_dir, source_dir, target_dir, phantom, train_fraction, slices_per_volume;
            flag: phantom_smoke, by_volume)
    }

    pub fn train_fraction(&self) -> Result<f64> {
        let f = self.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION);
        if f > 0.0 && f < 1.0 {
            Ok(f)
        } else {
            Err(Error::Config(format!("train_fraction must lie in (0, 1), got {f}")))
        }
    }

    pub fn slices_per_volume(&self) -> usize {
        self.slices_per_volume.unwrap_or(DEFAULT_SLICES_PER_VOLUME)
    }
}

impl HyperArgs {
    pub fn or(self, lower: Self) -> Self {
        layer!(self, lower;
            opt: epochs, batch_size, lr, beta1, beta2, lambda_cyc, lambda_identity, pool_size,
                 checkpoint_every, base_filters, n_blocks, disc_filters, latent_dim, max_steps;
            flag: )
    }

    pub fn to_config(&self, seed: u64, image_size: usize) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            lambda_cyc: self.lambda_cyc.unwrap_or(d.lambda_cyc),
            lambda_identity: self.lambda_identity.unwrap_or(d.lambda_identity),
            pool_size: self.pool_size.unwrap_or(d.pool_size),
            seed,
            image_size,
            checkpoint_every: self.checkpoint_every.unwrap_or(d.checkpoint_every),
            base_filters: self.base_filters.unwrap_or(d.base_filters),
            n_blocks: self.n_blocks.unwrap_or(d.n_blocks),
            disc_filters: self.disc_filters.clone().unwrap_or(d.disc_filters),
            latent_dim: self.latent_dim.unwrap_or(d.latent_dim),
            max_steps: self.max_steps.or(d.max_steps),
        }
    }
}

/// Every key a run file may contain.
const RUN_FILE_KEYS: &[&str] = &[
    "model", "output_dir", "seed", "image_size",
    "data_dir", "source_dir", "target_dir", "phantom", "phantom_smoke", "train_fraction", "by_volume", "slices_per_volume",
    "epochs", "batch_size", "lr", "beta1", "beta2", "lambda_cyc", "lambda_identity", "pool_size", "checkpoint_every",
    "base_filters", "n_blocks", "disc_filters", "latent_dim", "max_steps",
];

/// The parsed contents of a run file, split by concern.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunFile {
    pub model: Option<ModelChoice>,
    pub run: RunArgs,
    pub data: DataArgs,
    pub hyper: HyperArgs,
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct ModelKey {
    model: Option<ModelChoice>,
}

pub fn parse_run_file(text: &str, origin: &Path) -> Result<RunFile> {
    let fail = |e: &dyn fmt::Display| Error::Config(format!("{}: {e}", origin.display()));
    let table: toml::Table = text.parse().map_err(|e| fail(&e))?;
    if let Some(key) = table.keys().find(|k| !RUN_FILE_KEYS.contains(&k.as_str())) {
        return Err(fail(&format!("unknown key `{key}`")));
    }
    let value = toml::Value::Table(table);
    Ok(RunFile {
        model: value.clone().try_into::<ModelKey>().map_err(|e| fail(&e))?.model,
        run: value.clone().try_into().map_err(|e| fail(&e))?,
        data: value.clone().try_into().map_err(|e| fail(&e))?,
        hyper: value.try_into().map_err(|e| fail(&e))?,
    })
}

pub fn load_run_file(path: Option<&Path>) -> Result<RunFile> {
    match path {
        None => Ok(RunFile::default()),
        Some(p) => parse_run_file(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p),
    }
}

/// Render a resolved configuration as a run file that reproduces it.
pub fn render_run_file(model: ModelChoice, data: &DataArgs, cfg: &TrainConfig, output_dir: &Path) -> Result<String> {
    let mut table = toml::Table::new();
    table.insert("model".into(), model.as_str().into());
    table.insert("output_dir".into(), output_dir.display().to_string().into());
    let mut put = |v: toml::Value| {
        if let toml::Value::Table(t) = v {
            table.extend(t);
        }
    };
    let err = |e: toml::ser::Error| Error::Config(e.to_string());
    put(toml::Value::try_from(data).map_err(err)?);
    put(toml::Value::try_from(cfg).map_err(err)?);
    toml::to_string(&table).map_err(err)
}
