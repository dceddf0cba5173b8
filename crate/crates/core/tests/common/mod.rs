#![allow(dead_code)]

use fieldshift::datapipe::{make_phantom_dataset, DomainTag, SliceDataset};
use std::path::Path;

use fieldshift::gantrain::{
    generator_objective, save_checkpoint, Checkpoint, CycleGanState, Progress, TrainConfig, TrainState,
};
use fieldshift::models::{
    build_patch_discriminator_with, build_resnet_generator, init_parameters, NetworkSpec, NetworkState,
};
use fieldshift::nncore::{check_gradient, Evaluation, GradCheckReport, LayerSpec, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A CycleGAN small enough to train in seconds: 16x16 images, 4 base filters,
/// one residual block, a two-layer-plus-head PatchGAN.
pub fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 2,
        image_size: 16,
        base_filters: 4,
        n_blocks: 1,
        disc_filters: vec![4, 8],
        pool_size: 3,
        checkpoint_every: 1,
        seed,
        ..TrainConfig::default()
    }
}

pub fn phantom_pair(n: usize, size: usize, seed: u64) -> (SliceDataset, SliceDataset) {
    (
        make_phantom_dataset(n, size, DomainTag::Source3T, seed).unwrap(),
        make_phantom_dataset(n, size, DomainTag::Target1p5T, seed).unwrap(),
    )
}

fn perturbed(net: &mut NetworkState<f64>, rng: &mut ChaCha8Rng) {
    for p in &mut net.params {
        for v in p.data_mut() {
            *v += rng.random::<f64>() * 0.6 - 0.3;
        }
    }
}

/// Central-difference check of the full generator objective (adversarial
/// terms of both directions plus lambda * both cycle terms) with respect to
/// every parameter of G and F, in double precision: 8x8 images, one residual
/// block, a two-layer discriminator.
pub fn cyclegan_objective_gradcheck(seed: u64, lambda_identity: f64) -> GradCheckReport {
    let gen = build_resnet_generator(1, 2, 1, 8).unwrap();
    let disc = build_patch_discriminator_with(1, &[2], 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets: Vec<NetworkState<f64>> = (0..4)
        .map(|k| init_parameters(if k < 2 { &gen } else { &disc }, seed + k).unwrap())
        .collect();
    for n in &mut nets {
        perturbed(n, &mut rng);
    }
    let x = Tensor4::from_fn([2, 1, 8, 8], |_| rng.random::<f64>());
    let y = Tensor4::from_fn([2, 1, 8, 8], |_| rng.random::<f64>());
    let (g, f, dx, dy) = (&nets[0], &nets[1], &nets[2], &nets[3]);
    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    let pass = generator_objective(g, f, dx, dy, &x, &y, 10.0, lambda_identity, &mut dummy).unwrap();
    let n_g = g.params.len();
    let names: Vec<String> = g
        .names
        .iter()
        .map(|n| format!("G/{n}"))
        .chain(f.names.iter().map(|n| format!("F/{n}")))
        .collect();
    let mut params: Vec<Tensor4<f64>> = g.params.iter().chain(&f.params).cloned().collect();
    let grads: Vec<Tensor4<f64>> = pass.grad_g.into_iter().chain(pass.grad_f).collect();
    let (mut g2, mut f2) = (g.clone(), f.clone());
    check_gradient(
        &names,
        &mut params,
        1e-5,
        |p| {
            g2.params = p[..n_g].to_vec();
            f2.params = p[n_g..].to_vec();
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let out = generator_objective(&g2, &f2, dx, dy, &x, &y, 10.0, lambda_identity, &mut r)?;
            Ok(Evaluation {
                value: out.total,
                pattern: out.pattern,
            })
        },
        &grads,
    )
    .unwrap()
}

/// A CycleGAN state whose generators are fixed layer stacks (empty = identity)
/// and whose discriminators are identities too; handy for evaluation fixtures.
pub fn fixture_cyclegan(size: usize, g_layers: Vec<LayerSpec>, f_layers: Vec<LayerSpec>) -> Checkpoint {
    let cfg = TrainConfig { image_size: size, ..tiny_config(0) };
    let net = |name: &str, layers: Vec<LayerSpec>| {
        init_parameters::<f32>(&NetworkSpec::new(name, [1, size, size], layers).unwrap(), 0).unwrap()
    };
    let state = CycleGanState::from_networks(net("G", g_layers), net("F", f_layers), net("D_X", vec![]), net("D_Y", vec![]), &cfg);
    Checkpoint { state: TrainState::CycleGan(state), config: cfg, progress: Progress::default() }
}

pub fn save_fixture(dir: &Path, ck: &Checkpoint) {
    save_checkpoint(ck, dir).unwrap();
}

fn uniform(shape: [usize; 4], seed: u64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_| rng.random::<f64>())
}

/// Central-difference check of a whole network (every parameter and the input)
/// under a fixed random projection of its output; dropout masks are replayed.
pub fn network_gradcheck(spec: &NetworkSpec, input: [usize; 4], seed: u64) -> GradCheckReport {
    let net = init_parameters::<f64>(spec, seed).unwrap();
    // larger weights than the 0.02 init keep signals well away from roundoff
    let mut net = net;
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in &mut net.params {
        for v in p.data_mut() {
            *v += rng.random::<f64>() * 0.6 - 0.3;
        }
    }
    let x = uniform(input, seed + 1).map(|v| v * 2.0 - 1.0);
    let out_shape = net.infer(&x).unwrap().shape();
    let proj = uniform(out_shape, seed + 2).map(|v| v * 2.0 - 1.0);
    let dot = |y: &Tensor4<f64>| y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum::<f64>();

    let mut drop_rng = ChaCha8Rng::seed_from_u64(77);
    let (_, tape) = net.forward_train(&x, &mut drop_rng).unwrap();
    let mut grads = net.zeros_like_params();
    let dx = net.backward(tape, &proj, &mut grads).unwrap();

    let mut names = net.names.clone();
    names.push("input".into());
    let mut params = net.params.clone();
    params.push(x.clone());
    grads.push(dx);
    let template = net.clone();
    check_gradient(
        &names,
        &mut params,
        1e-4,
        |p| {
            let mut n = template.clone();
            n.params = p[..p.len() - 1].to_vec();
            let mut r = ChaCha8Rng::seed_from_u64(77);
            let (y, tape) = n.forward_train(&p[p.len() - 1], &mut r)?;
            Ok(Evaluation {
                value: dot(&y),
                pattern: tape.activation_pattern(),
            })
        },
        &grads,
    )
    .unwrap()
}
