//! DCGAN baseline: one discriminator update then one generator update per batch.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::AdamSlots;
use super::config::TrainConfig;
use super::loss::bce_loss_grad;
use crate::error::{Error, Result};
use crate::models::{build_dcgan_discriminator, build_dcgan_generator, init_parameters, NetworkState};
use crate::nncore::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcganLosses {
    #[serde(rename = "loss_D")]
    pub d: f64,
    #[serde(rename = "loss_G")]
    pub g: f64,
    /// Mean discriminator output on the real and generated batches (before the D update).
    #[serde(skip)]
    pub d_real: f64,
    #[serde(skip)]
    pub d_fake: f64,
}

impl DcganLosses {
    pub fn fields(&self) -> [(&'static str, f64); 2] {
        [("loss_D", self.d), ("loss_G", self.g)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcganState {
    pub g: NetworkState<f32>,
    pub d: NetworkState<f32>,
    pub adam_g: AdamSlots,
    pub adam_d: AdamSlots,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl DcganState {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let g = init_parameters(&build_dcgan_generator(cfg.latent_dim, cfg.image_size)?, cfg.seed.wrapping_mul(2).wrapping_add(1))?;
        let d = init_parameters(&build_dcgan_discriminator(cfg.image_size)?, cfg.seed.wrapping_mul(2).wrapping_add(2))?;
        Ok(Self {
            adam_g: AdamSlots::new(&g.params),
            adam_d: AdamSlots::new(&d.params),
            g,
            d,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6463_6761_6e),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.g.spec.input_shape[0]
    }
}

/// `(n, latent_dim, 1, 1)` standard-normal codes.
pub fn sample_latent(n: usize, latent_dim: usize, rng: &mut dyn RngCore) -> Tensor4<f32> {
    Tensor4::from_fn([n, latent_dim, 1, 1], |_| {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}

fn mean(t: &Tensor4<f32>) -> f64 {
    t.data().iter().map(|&v| v as f64).sum::<f64>() / t.len() as f64
}

fn diverged(step: u64, what: &str) -> Error {
    Error::Divergence { step, what: what.to_string() }
}

/// D step: `bce(D(real), 1) + bce(D(G(z)), 0)`; G step: `bce(D(G(z)), 1)`
/// against the updated discriminator, same `z`, fresh dropout masks.
pub fn dcgan_train_step(state: &mut DcganState, real: &Tensor4<f32>, cfg: &TrainConfig) -> Result<DcganLosses> {
    let step = state.step + 1;
    let mut rng = state.rng.clone();
    let n = real.batch();
    let z = sample_latent(n, state.latent_dim(), &mut rng);
    let adam = cfg.adam();

    let (fake, _) = state.g.forward_train(&z, &mut rng)?;
    let (p_real, tape_real) = state.d.forward_train(real, &mut rng)?;
    let (p_fake, tape_fake) = state.d.forward_train(&fake, &mut rng)?;
    let (l_real, g_real) = bce_loss_grad(&p_real, 1.0);
    let (l_fake, g_fake) = bce_loss_grad(&p_fake, 0.0);
    let loss_d = (l_real + l_fake) as f64;
    if !loss_d.is_finite() {
        return Err(diverged(step, "loss_D"));
    }
    let mut grad_d = state.d.zeros_like_params();
    state.d.backward(tape_real, &g_real, &mut grad_d)?;
    state.d.backward(tape_fake, &g_fake, &mut grad_d)?;
    if !grad_d.iter().all(|g| g.is_finite()) {
        return Err(diverged(step, "gradient of D"));
    }
    let mut d_next = state.d.clone();
    let mut adam_d = state.adam_d.clone();
    adam_d.step(&adam, &mut d_next.params, &grad_d)?;

    let (fake, tape_g) = state.g.forward_train(&z, &mut rng)?;
    let (p_gen, tape_d) = d_next.forward_train(&fake, &mut rng)?;
    let (l_gen, g_gen) = bce_loss_grad(&p_gen, 1.0);
    let loss_g = l_gen as f64;
    if !loss_g.is_finite() {
        return Err(diverged(step, "loss_G"));
    }
    let mut scratch = d_next.zeros_like_params();
    let d_fake = d_next.backward(tape_d, &g_gen, &mut scratch)?;
    let mut grad_g = state.g.zeros_like_params();
    state.g.backward(tape_g, &d_fake, &mut grad_g)?;
    if !grad_g.iter().all(|g| g.is_finite()) {
        return Err(diverged(step, "gradient of G"));
    }
    state.adam_g.step(&adam, &mut state.g.params, &grad_g)?;
    state.d = d_next;
    state.adam_d = adam_d;
    state.rng = rng;
    state.step = step;
    Ok(DcganLosses {
        d: loss_d,
        g: loss_g,
        d_real: mean(&p_real),
        d_fake: mean(&p_fake),
    })
}
