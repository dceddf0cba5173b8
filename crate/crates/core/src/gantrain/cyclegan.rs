//! CycleGAN state and the joint generator / per-domain discriminator step.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamSlots;
use super::config::TrainConfig;
use super::loss::{
    adversarial_loss_discriminator_grad, adversarial_loss_generator_grad, cycle_loss_grad,
};
use super::pool::ImagePool;
use crate::error::{Error, Result};
use crate::models::{build_patch_discriminator_with, build_resnet_generator, init_parameters, NetworkState};
use crate::nncore::{Real, Tensor4};

/// Losses of one CycleGAN step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLosses {
    #[serde(rename = "loss_G_adv")]
    pub g_adv: f64,
    #[serde(rename = "loss_F_adv")]
    pub f_adv: f64,
    #[serde(rename = "loss_cycle_forward")]
    pub cycle_forward: f64,
    #[serde(rename = "loss_cycle_backward")]
    pub cycle_backward: f64,
    #[serde(rename = "loss_D_X")]
    pub d_x: f64,
    #[serde(rename = "loss_D_Y")]
    pub d_y: f64,
}

impl CycleLosses {
    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("loss_G_adv", self.g_adv),
            ("loss_F_adv", self.f_adv),
            ("loss_cycle_forward", self.cycle_forward),
            ("loss_cycle_backward", self.cycle_backward),
            ("loss_D_X", self.d_x),
            ("loss_D_Y", self.d_y),
        ]
    }

    /// The reconstruction error averaged over both directions.
    pub fn cycle_mean(&self) -> f64 {
        0.5 * (self.cycle_forward + self.cycle_backward)
    }
}

/// G: X -> Y, F: Y -> X, and the two discriminators, with optimizer slots and image pools.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleGanState {
    pub g: NetworkState<f32>,
    pub f: NetworkState<f32>,
    pub d_x: NetworkState<f32>,
    pub d_y: NetworkState<f32>,
    pub adam_g: AdamSlots,
    pub adam_f: AdamSlots,
    pub adam_dx: AdamSlots,
    pub adam_dy: AdamSlots,
    pub pool_x: ImagePool,
    pub pool_y: ImagePool,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl CycleGanState {
    /// Fresh networks sized by `cfg`; every component derives its seed from `cfg.seed`.
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = build_resnet_generator(1, cfg.base_filters, cfg.n_blocks, cfg.image_size)?;
        let disc = build_patch_discriminator_with(1, &cfg.disc_filters, cfg.image_size)?;
        let s = cfg.seed;
        let g = init_parameters(&gen, s.wrapping_mul(4).wrapping_add(1))?;
        let f = init_parameters(&gen, s.wrapping_mul(4).wrapping_add(2))?;
        let d_x = init_parameters(&disc, s.wrapping_mul(4).wrapping_add(3))?;
        let d_y = init_parameters(&disc, s.wrapping_mul(4).wrapping_add(4))?;
        Ok(Self::from_networks(g, f, d_x, d_y, cfg))
    }

    pub fn from_networks(
        g: NetworkState<f32>,
        f: NetworkState<f32>,
        d_x: NetworkState<f32>,
        d_y: NetworkState<f32>,
        cfg: &TrainConfig,
    ) -> Self {
        let s = cfg.seed;
        Self {
            adam_g: AdamSlots::new(&g.params),
            adam_f: AdamSlots::new(&f.params),
            adam_dx: AdamSlots::new(&d_x.params),
            adam_dy: AdamSlots::new(&d_y.params),
            g,
            f,
            d_x,
            d_y,
            pool_x: ImagePool::new(cfg.pool_size, s ^ 0x706f_6f6c_5f78),
            pool_y: ImagePool::new(cfg.pool_size, s ^ 0x706f_6f6c_5f79),
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(s ^ 0x6379_636c_6567_616e),
        }
    }
}

/// Everything the generator half of a step produces.
pub struct GeneratorPass<T> {
    pub total: T,
    pub g_adv: T,
    pub f_adv: T,
    pub cycle_forward: T,
    pub cycle_backward: T,
    pub identity: T,
    pub grad_g: Vec<Tensor4<T>>,
    pub grad_f: Vec<Tensor4<T>>,
    pub fake_x: Tensor4<T>,
    pub fake_y: Tensor4<T>,
    /// ReLU-family activation pattern of every network evaluated (for kink-aware gradient checks).
    pub pattern: Vec<bool>,
}

/// The full generator objective
/// `adv(D_Y(G(x))) + adv(D_X(F(y))) + l_cyc [|F(G(x)) - x| + |G(F(y)) - y|]`
/// (+ `l_cyc * l_id [|G(y) - y| + |F(x) - x|]` when identity is enabled),
/// and its gradient with respect to the parameters of G and F. The
/// discriminators are only read.
#[allow(clippy::too_many_arguments)]
pub fn generator_objective<T: Real>(
    g: &NetworkState<T>,
    f: &NetworkState<T>,
    d_x: &NetworkState<T>,
    d_y: &NetworkState<T>,
    x: &Tensor4<T>,
    y: &Tensor4<T>,
    lambda_cyc: f64,
    lambda_identity: f64,
    rng: &mut dyn RngCore,
) -> Result<GeneratorPass<T>> {
    x.check_same_shape(y)?;
    let lam = T::lit(lambda_cyc);
    let mut pattern = Vec::new();

    let (fake_y, tape_gx) = g.forward_train(x, rng)?;
    let (rec_x, tape_f_fake) = f.forward_train(&fake_y, rng)?;
    let (fake_x, tape_fy) = f.forward_train(y, rng)?;
    let (rec_y, tape_g_fake) = g.forward_train(&fake_x, rng)?;
    let (score_y, tape_dy) = d_y.forward_train(&fake_y, rng)?;
    let (score_x, tape_dx) = d_x.forward_train(&fake_x, rng)?;
    for tape in [&tape_gx, &tape_f_fake, &tape_fy, &tape_g_fake, &tape_dy, &tape_dx] {
        pattern.extend(tape.activation_pattern());
    }

    // the L1 terms kink where a reconstruction crosses its target
    for (rec, orig) in [(&rec_x, x), (&rec_y, y)] {
        pattern.extend(rec.data().iter().zip(orig.data()).map(|(r, o)| r > o));
    }

    let (g_adv, d_score_y) = adversarial_loss_generator_grad(&score_y);
    let (f_adv, d_score_x) = adversarial_loss_generator_grad(&score_x);
    let (cycle_forward, mut d_rec_x) = cycle_loss_grad(x, &rec_x)?;
    let (cycle_backward, mut d_rec_y) = cycle_loss_grad(y, &rec_y)?;
    d_rec_x.scale(lam);
    d_rec_y.scale(lam);

    let mut grad_g = g.zeros_like_params();
    let mut grad_f = f.zeros_like_params();
    let mut scratch_dx = d_x.zeros_like_params();
    let mut scratch_dy = d_y.zeros_like_params();

    // x -> G -> F: the reconstruction and D_Y both feed back into fake_y.
    let mut d_fake_y = f.backward(tape_f_fake, &d_rec_x, &mut grad_f)?;
    d_fake_y.add_assign(&d_y.backward(tape_dy, &d_score_y, &mut scratch_dy)?)?;
    g.backward(tape_gx, &d_fake_y, &mut grad_g)?;

    // y -> F -> G
    let mut d_fake_x = g.backward(tape_g_fake, &d_rec_y, &mut grad_g)?;
    d_fake_x.add_assign(&d_x.backward(tape_dx, &d_score_x, &mut scratch_dx)?)?;
    f.backward(tape_fy, &d_fake_x, &mut grad_f)?;

    let mut identity = T::zero();
    if lambda_identity > 0.0 {
        let w = T::lit(lambda_cyc * lambda_identity);
        let (idt_y, tape) = g.forward_train(y, rng)?;
        pattern.extend(tape.activation_pattern());
        pattern.extend(idt_y.data().iter().zip(y.data()).map(|(r, o)| r > o));
        let (l, mut d) = cycle_loss_grad(y, &idt_y)?;
        d.scale(w);
        g.backward(tape, &d, &mut grad_g)?;
        identity = l;
        let (idt_x, tape) = f.forward_train(x, rng)?;
        pattern.extend(tape.activation_pattern());
        pattern.extend(idt_x.data().iter().zip(x.data()).map(|(r, o)| r > o));
        let (l, mut d) = cycle_loss_grad(x, &idt_x)?;
        d.scale(w);
        f.backward(tape, &d, &mut grad_f)?;
        identity += l;
        identity *= w;
    }

    let total = g_adv + f_adv + lam * (cycle_forward + cycle_backward) + identity;
    Ok(GeneratorPass {
        total,
        g_adv,
        f_adv,
        cycle_forward,
        cycle_backward,
        identity,
        grad_g,
        grad_f,
        fake_x,
        fake_y,
        pattern,
    })
}

fn finite(step: u64, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { step, what: what.to_string() })
    }
}

/// Least-squares discriminator loss and parameter gradients on `real` vs `fake`.
fn discriminator_grads(
    d: &NetworkState<f32>,
    real: &Tensor4<f32>,
    fake: &Tensor4<f32>,
    rng: &mut dyn RngCore,
    step: u64,
    name: &str,
) -> Result<(f64, Vec<Tensor4<f32>>)> {
    let (s_real, tape_real) = d.forward_train(real, rng)?;
    let (s_fake, tape_fake) = d.forward_train(fake, rng)?;
    let (loss, g_real, g_fake) = adversarial_loss_discriminator_grad(&s_real, &s_fake);
    let loss = finite(step, name, loss as f64)?;
    let mut grads = d.zeros_like_params();
    d.backward(tape_real, &g_real, &mut grads)?;
    d.backward(tape_fake, &g_fake, &mut grads)?;
    check_grads(&grads, step, name)?;
    Ok((loss, grads))
}

fn check_grads(grads: &[Tensor4<f32>], step: u64, name: &str) -> Result<()> {
    if grads.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step, what: format!("gradient of {name}") })
    }
}

/// One CycleGAN iteration: a joint Adam step on G and F, then D_Y on
/// (real y, pooled G(x)), then D_X on (real x, pooled F(y)). The fakes shown
/// to the discriminators are the ones produced before the generator update.
/// All losses and gradients are computed before anything is written, so on
/// divergence the state is left untouched.
pub fn cyclegan_train_step(
    state: &mut CycleGanState,
    batch_x: &Tensor4<f32>,
    batch_y: &Tensor4<f32>,
    cfg: &TrainConfig,
) -> Result<CycleLosses> {
    if batch_x.batch() != batch_y.batch() {
        return Err(Error::Dimension {
            axis: "batch",
            expected: batch_x.batch(),
            actual: batch_y.batch(),
        });
    }
    let step = state.step + 1;
    let mut rng = state.rng.clone();
    let pass = generator_objective(
        &state.g,
        &state.f,
        &state.d_x,
        &state.d_y,
        batch_x,
        batch_y,
        cfg.lambda_cyc,
        cfg.lambda_identity,
        &mut rng,
    )?;
    let g_adv = finite(step, "loss_G_adv", pass.g_adv as f64)?;
    let f_adv = finite(step, "loss_F_adv", pass.f_adv as f64)?;
    let cycle_forward = finite(step, "loss_cycle_forward", pass.cycle_forward as f64)?;
    let cycle_backward = finite(step, "loss_cycle_backward", pass.cycle_backward as f64)?;
    finite(step, "generator objective", pass.total as f64)?;
    check_grads(&pass.grad_g, step, "G")?;
    check_grads(&pass.grad_f, step, "F")?;

    let mut pool_y = state.pool_y.clone();
    let mut pool_x = state.pool_x.clone();
    let pooled_y = pool_y.query(&pass.fake_y)?;
    let (d_y, grad_dy) = discriminator_grads(&state.d_y, batch_y, &pooled_y, &mut rng, step, "loss_D_Y")?;
    let pooled_x = pool_x.query(&pass.fake_x)?;
    let (d_x, grad_dx) = discriminator_grads(&state.d_x, batch_x, &pooled_x, &mut rng, step, "loss_D_X")?;

    let adam = cfg.adam();
    state.adam_g.step(&adam, &mut state.g.params, &pass.grad_g)?;
    state.adam_f.step(&adam, &mut state.f.params, &pass.grad_f)?;
    state.adam_dy.step(&adam, &mut state.d_y.params, &grad_dy)?;
    state.adam_dx.step(&adam, &mut state.d_x.params, &grad_dx)?;
    state.pool_x = pool_x;
    state.pool_y = pool_y;
    state.rng = rng;
    state.step = step;
    Ok(CycleLosses {
        g_adv,
        f_adv,
        cycle_forward,
        cycle_backward,
        d_x,
        d_y,
    })
}

/// Translate with G (`forward`) or F (`backward`), returning (translated, reconstructed).
pub fn translate_cycle(
    state_g: &NetworkState<f32>,
    state_f: &NetworkState<f32>,
    images: &Tensor4<f32>,
    forward: bool,
) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    let (first, second) = if forward { (state_g, state_f) } else { (state_f, state_g) };
    let translated = first.infer(images)?;
    let reconstructed = second.infer(&translated)?;
    Ok((translated, reconstructed))
}
