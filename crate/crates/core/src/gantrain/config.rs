use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::pool::DEFAULT_POOL_SIZE;
use crate::error::{Error, Result};

pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 4;
pub const DEFAULT_LR: f64 = 0.0002;
pub const DEFAULT_BETA1: f64 = 0.5;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_LAMBDA_CYC: f64 = 10.0;
pub const DEFAULT_LATENT_DIM: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_cyc: f64,
    /// Weight of the identity term relative to `lambda_cyc`; 0 disables it.
    pub lambda_identity: f64,
    pub pool_size: usize,
    pub seed: u64,
    pub image_size: usize,
    pub checkpoint_every: usize,
    /// Generator width and depth (64 filters, 9 residual blocks by default).
    pub base_filters: usize,
    pub n_blocks: usize,
    /// Discriminator widths per hidden layer (PatchGAN: 64,128,256,512).
    pub disc_filters: Vec<usize>,
    pub latent_dim: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            lambda_cyc: DEFAULT_LAMBDA_CYC,
            lambda_identity: 0.0,
            pool_size: DEFAULT_POOL_SIZE,
            seed: 0,
            image_size: 256,
            checkpoint_every: 10,
            base_filters: 64,
            n_blocks: 9,
            disc_filters: vec![64, 128, 256, 512],
            latent_dim: DEFAULT_LATENT_DIM,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("epochs, batch_size and checkpoint_every must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr < 1.0) {
            return bad("lr must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.lambda_cyc >= 0.0) || !(self.lambda_identity >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.image_size == 0 || self.base_filters == 0 || self.latent_dim == 0 {
            return bad("image_size, base_filters and latent_dim must be >= 1");
        }
        if self.disc_filters.is_empty() || self.disc_filters.contains(&0) {
            return bad("disc_filters must be non-empty and positive");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be >= 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }
}
