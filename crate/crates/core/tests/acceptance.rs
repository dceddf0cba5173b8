//! Acceptance suite: one PASS/FAIL line per criterion, then a single verdict.
//!
//! The lines go straight to stderr, so a plain `cargo test` shows them. The
//! CycleGAN smoke run (criterion 5) trains the full-size networks for 100
//! steps and takes several minutes on one core.

mod common;

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fieldshift::datapipe::{
    encode_nifti, make_phantom_dataset, parse_nifti, split_dataset, standardize, to_tensor, DomainTag, NiftiDtype,
    NiftiWriteOptions, Provenance, SliceImage, Volume,
};
use fieldshift::evalmetrics::{
    evaluate_cycle, format_report, mae_sum, mse, psnr, Direction, ImageView,
};
use fieldshift::gantrain::{
    cyclegan_train_step, dcgan_train_step, load_checkpoint, sample_latent, save_checkpoint, train, Checkpoint,
    CycleGanState, DcganState, Progress, TrainConfig, TrainData, TrainState, HISTORY_FILE,
};
use fieldshift::models::{
    build_dcgan_generator, build_patch_discriminator, build_resnet_generator, init_parameters, receptive_field,
};
use fieldshift::nncore::gradcheck::{ActivationOp, Conv2dOp, ConvTranspose2dOp, DenseOp, DropoutOp, InstanceNormOp, ScaleOp};
use fieldshift::nncore::{grad_check, ActivationKind, Differentiable, LayerSpec, Tensor4};
use fieldshift::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

fn uniform(shape: [usize; 4], seed: u64, lo: f64, hi: f64) -> Tensor4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor4::from_fn(shape, |_| lo + (hi - lo) * rng.random::<f64>())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn c1_metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for (k, (h, w)) in [(17usize, 23usize), (64, 64), (256, 256)].into_iter().enumerate() {
        for _ in 0..[34, 33, 33][k] {
            let a: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let (mut abs, mut sq) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let d = a[r * w + c] - b[r * w + c];
                    abs += d.abs();
                    sq += d * d;
                }
            }
            let m = sq / (h * w) as f64;
            let p = 10.0 * (1.0 / m).log10();
            let (va, vb) = (ImageView::new(&a, h, w).unwrap(), ImageView::new(&b, h, w).unwrap());
            worst = worst
                .max(rel(abs, mae_sum(&va, &vb).unwrap()))
                .max(rel(m, mse(&va, &vb).unwrap()))
                .max(rel(p, psnr(&va, &vb, 1.0).unwrap()));
            pairs += 1;
        }
    }
    ensure(pairs == 100, || format!("{pairs} pairs"))?;
    ensure(worst <= 1e-12, || format!("worst relative difference {worst:e}"))?;
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("100 pairs (17x23, 64x64, 256x256), worst rel diff {worst:.1e}, {t:.2?}"))
}

fn c2_conventions() -> Outcome {
    let p = |m: f64| -10.0 * m.log10();
    let row1 = p(0.00328);
    ensure((25.69 - 2.49..=25.69 + 2.49).contains(&row1), || format!("row 1 PSNR {row1}"))?;
    ensure((row1 - 24.84).abs() < 0.005, || format!("row 1 PSNR {row1} != 24.84"))?;
    let row3 = (p(0.24) - 6.20).abs();
    ensure(row3 < 0.01, || format!("row 3 |PSNR - 6.20| = {row3}"))?;
    let mae3 = (31907.44 / 65536.0 - 0.24f64.sqrt()).abs();
    ensure(mae3 < 0.005, || format!("row 3 MAE gap {mae3}"))?;
    let mae4 = (22559.57 / 65536.0 - 0.14f64.sqrt()).abs();
    ensure(mae4 < 0.04, || format!("row 4 MAE gap {mae4}"))?;
    Ok(format!("PSNR(0.00328) = {row1:.2} in 25.69 ± 2.49; row 3 gaps {row3:.4} / {mae3:.4}; row 4 gap {mae4:.4}"))
}

fn c3_architecture() -> Outcome {
    let start = Instant::now();
    let patch = build_patch_discriminator(1, 256).map_err(|e| e.to_string())?;
    let d = init_parameters::<f32>(&patch, 1).map_err(|e| e.to_string())?;
    let out = d.infer(&Tensor4::filled([1, 1, 256, 256], 0.5)).map_err(|e| e.to_string())?;
    ensure(out.shape() == [1, 1, 30, 30], || format!("PatchGAN output {:?}", out.shape()))?;
    let rf = receptive_field(&patch).map_err(|e| e.to_string())?;
    ensure(rf == 70, || format!("receptive field {rf}"))?;
    for size in [64, 128, 256] {
        let spec = build_resnet_generator(1, 64, 9, size).map_err(|e| e.to_string())?;
        let g = init_parameters::<f32>(&spec, 2).map_err(|e| e.to_string())?;
        let x = Tensor4::filled([1, 1, size, size], 0.25f32);
        let y = g.infer(&x).map_err(|e| e.to_string())?;
        ensure(y.shape() == [1, 1, size, size], || format!("generator at {size}: {:?}", y.shape()))?;
    }
    let spec = build_dcgan_generator(100, 64).map_err(|e| e.to_string())?;
    let g = init_parameters::<f32>(&spec, 3).map_err(|e| e.to_string())?;
    let z = sample_latent(5, 100, &mut ChaCha8Rng::seed_from_u64(4));
    let imgs = g.infer(&z).map_err(|e| e.to_string())?;
    ensure(imgs.shape() == [5, 1, 64, 64], || format!("DCGAN output {:?}", imgs.shape()))?;
    ensure(imgs.data().iter().all(|v| *v > 0.0 && *v < 1.0), || "DCGAN output leaves (0,1)".into())?;
    let t = within(Duration::from_secs(30), start)?;
    Ok(format!("PatchGAN 256 -> 30x30, RF 70; ResNet 64/128/256 preserved; DCGAN (5,1,64,64) in (0,1); {t:.1?}"))
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let r = |shape, seed| uniform(shape, seed, -1.0, 1.0);
    let ops: Vec<(&str, Box<dyn Differentiable<f64>>, Vec<Tensor4<f64>>)> = vec![
        ("conv2d", Box::new(Conv2dOp { stride: (2, 2), padding: (1, 1) }), vec![r([2, 2, 7, 7], 1), r([3, 2, 4, 4], 2), r([3, 1, 1, 1], 3)]),
        ("conv2d_reflect_free_3x3", Box::new(Conv2dOp { stride: (1, 1), padding: (1, 1) }), vec![r([1, 2, 5, 5], 4), r([2, 2, 3, 3], 5), r([2, 1, 1, 1], 6)]),
        (
            "conv_transpose2d",
            Box::new(ConvTranspose2dOp { stride: (2, 2), padding: (1, 1), output_padding: (1, 1) }),
            vec![r([2, 2, 4, 4], 7), r([2, 3, 3, 3], 8), r([3, 1, 1, 1], 9)],
        ),
        ("instance_norm", Box::new(InstanceNormOp { eps: 1e-5 }), vec![r([2, 3, 5, 5], 10), r([3, 1, 1, 1], 11), r([3, 1, 1, 1], 12)]),
        ("relu", Box::new(ActivationOp(ActivationKind::Relu)), vec![r([2, 2, 4, 4], 13)]),
        ("leaky_relu", Box::new(ActivationOp(ActivationKind::LeakyRelu { alpha: 0.2 })), vec![r([2, 2, 4, 4], 14)]),
        ("tanh", Box::new(ActivationOp(ActivationKind::Tanh)), vec![r([2, 2, 4, 4], 15)]),
        ("sigmoid", Box::new(ActivationOp(ActivationKind::Sigmoid)), vec![r([2, 2, 4, 4], 16)]),
        ("dropout", Box::new(DropoutOp { rate: 0.3, seed: 17 }), vec![r([2, 2, 4, 4], 18)]),
        ("dense", Box::new(DenseOp), vec![r([3, 6, 1, 1], 19), r([4, 6, 1, 1], 20), r([4, 1, 1, 1], 21)]),
        ("scale", Box::new(ScaleOp(-1.5)), vec![r([1, 2, 3, 3], 22)]),
    ];
    let mut worst = (String::new(), 0.0f64);
    for (name, op, inputs) in &ops {
        let err = grad_check(op.as_ref(), inputs, 1e-6).map_err(|e| format!("{name}: {e}"))?;
        ensure(err < 1e-4, || format!("{name}: relative error {err:e}"))?;
        if err > worst.1 {
            worst = (name.to_string(), err);
        }
    }
    // the remaining layer kinds only exist inside networks: flatten, reshape,
    // rescale and residual blocks, checked through whole-network backprop
    let net = fieldshift::models::NetworkSpec::new(
        "layer_zoo",
        [2, 6, 6],
        vec![
            LayerSpec::ResidualBlock { body: vec![LayerSpec::conv(2, 3, 1, 1), LayerSpec::instance_norm(), LayerSpec::relu(), LayerSpec::conv(2, 3, 1, 1)] },
            LayerSpec::Rescale { scale: 0.5, offset: 0.1 },
            LayerSpec::conv(2, 3, 2, 1),
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: 8 },
            LayerSpec::Reshape { channels: 2, height: 2, width: 2 },
            LayerSpec::conv_transpose(1, 4, 2, 1, 0),
            LayerSpec::Activation(ActivationKind::Tanh),
        ],
    )
    .map_err(|e| e.to_string())?;
    let zoo = common::network_gradcheck(&net, [2, 2, 6, 6], 5);
    ensure(zoo.max_relative_error < 1e-4, || format!("layer zoo network: {zoo:?}"))?;
    let mut kinks = zoo.kink_crossings;
    let mut checked = zoo.checked;
    let mut objective_worst = 0.0f64;
    for lambda_identity in [0.0, 0.5] {
        let rep = common::cyclegan_objective_gradcheck(3, lambda_identity);
        ensure(rep.max_relative_error < 1e-4, || format!("CycleGAN objective (identity {lambda_identity}): {rep:?}"))?;
        ensure(rep.kink_crossings * 20 < rep.checked, || format!("too many kink crossings: {rep:?}"))?;
        objective_worst = objective_worst.max(rep.max_relative_error);
        kinks += rep.kink_crossings;
        checked += rep.checked;
    }
    let t = within(Duration::from_secs(300), start)?;
    Ok(format!(
        "{} ops (worst {} {:.1e}), layer-zoo network {:.1e}, CycleGAN objective {objective_worst:.1e}; \
         {checked} coordinates scored, {kinks} kink crossings reported; {t:.1?}",
        ops.len(),
        worst.0,
        worst.1,
        zoo.max_relative_error
    ))
}

fn smoke_config() -> TrainConfig {
    TrainConfig {
        image_size: 64,
        epochs: 25,
        max_steps: Some(100),
        checkpoint_every: 25,
        seed: 2024,
        ..TrainConfig::default()
    }
}

fn c5_cyclegan_smoke() -> Outcome {
    let start = Instant::now();
    let cfg = smoke_config();
    let (x, y) = common::phantom_pair(23, 64, 11);
    ensure(x.train.len() == 16 && y.train.len() == 16, || format!("{} / {} training images", x.train.len(), y.train.len()))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let history = train(TrainData::CycleGan { x: &x.train, y: &y.train }, &cfg, dir.path(), None).map_err(|e| e.to_string())?;
    ensure(history.rows.len() == 100, || format!("{} steps", history.rows.len()))?;
    ensure(
        history.rows.iter().all(|r| r.losses.iter().all(|(_, v)| v.is_finite())),
        || "non-finite loss".into(),
    )?;
    let cycle = |r: &fieldshift::gantrain::HistoryRow| {
        (r.get("loss_cycle_forward").unwrap() + r.get("loss_cycle_backward").unwrap()) / 2.0
    };
    let early = history.rows[..10].iter().map(cycle).sum::<f64>() / 10.0;
    let late = history.rows[90..].iter().map(cycle).sum::<f64>() / 10.0;
    let ratio = late / early;
    let t = start.elapsed();
    let detail = format!("cycle loss steps 1-10 {early:.4}, steps 91-100 {late:.4}, ratio {ratio:.3}; {t:.0?}");
    ensure(ratio <= 0.5, || format!("ratio above 0.5: {detail}"))?;
    within(Duration::from_secs(15 * 60), start)?;
    Ok(detail)
}

fn c6_dcgan_smoke() -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig { image_size: 64, seed: 7, ..TrainConfig::default() };
    let real = make_phantom_dataset(23, 64, DomainTag::Target1p5T, 12).map_err(|e| e.to_string())?.train;
    let mut state = DcganState::new(&cfg).map_err(|e| e.to_string())?;
    let mut first = None;
    let mut steps = 0;
    'run: for epoch in 0.. {
        let order = fieldshift::datapipe::epoch_order(real.len(), true, cfg.seed, epoch);
        for ids in order.chunks(cfg.batch_size) {
            let batch: Vec<&SliceImage> = ids.iter().map(|&i| &real[i]).collect();
            let batch = to_tensor::<f32>(&batch).map_err(|e| e.to_string())?;
            let l = dcgan_train_step(&mut state, &batch, &cfg).map_err(|e| e.to_string())?;
            ensure(l.d.is_finite() && l.g.is_finite(), || format!("step {steps}: non-finite loss {l:?}"))?;
            ensure(
                l.d_real > 0.0 && l.d_real < 1.0 && l.d_fake > 0.0 && l.d_fake < 1.0,
                || format!("step {steps}: D outputs {l:?}"),
            )?;
            first.get_or_insert(l);
            steps += 1;
            if steps == 100 {
                break 'run;
            }
        }
    }
    let first = first.expect("at least one step");
    ensure(
        (0.3..=3.0).contains(&first.d) && (0.3..=3.0).contains(&first.g),
        || format!("first-step losses D {} G {}", first.d, first.g),
    )?;
    let z = sample_latent(8, cfg.latent_dim, &mut ChaCha8Rng::seed_from_u64(99));
    let fake = state.g.infer(&z).map_err(|e| e.to_string())?;
    ensure(fake.data().iter().all(|v| *v > 0.0 && *v < 1.0), || "generator output leaves (0,1)".into())?;
    let refs: Vec<&SliceImage> = real.iter().take(8).collect();
    let scores = [state.d.infer(&fake), state.d.infer(&to_tensor(&refs).map_err(|e| e.to_string())?)];
    for s in scores {
        let s = s.map_err(|e| e.to_string())?;
        ensure(s.data().iter().all(|v| *v > 0.0 && *v < 1.0), || "discriminator output leaves (0,1)".into())?;
    }
    Ok(format!("100 steps finite; first-step D {:.3} G {:.3}; all D/G outputs in (0,1); {:.1?}", first.d, first.g, start.elapsed()))
}

fn c7_determinism() -> Outcome {
    let cfg = TrainConfig { max_steps: Some(10), epochs: 10, ..common::tiny_config(31) };
    let (x, y) = common::phantom_pair(16, 16, 5);
    let run = || -> Result<Vec<u8>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let h = train(TrainData::CycleGan { x: &x.train, y: &y.train }, &cfg, dir.path(), None).map_err(|e| e.to_string())?;
        ensure(h.rows.len() == 10, || format!("{} steps", h.rows.len()))?;
        fs::read(dir.path().join(HISTORY_FILE)).map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    ensure(a == b, || "history.csv differs between identical runs".into())?;

    let mut state = CycleGanState::new(&cfg).map_err(|e| e.to_string())?;
    let xb = to_tensor::<f32>(&x.train.iter().take(2).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let yb = to_tensor::<f32>(&y.train.iter().take(2).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        cyclegan_train_step(&mut state, &xb, &yb, &cfg).map_err(|e| e.to_string())?;
    }
    let ck = Checkpoint { state: TrainState::CycleGan(state.clone()), config: cfg.clone(), progress: Progress::default() };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_checkpoint(&ck, dir.path()).map_err(|e| e.to_string())?;
    let back = load_checkpoint(dir.path()).map_err(|e| e.to_string())?;
    let TrainState::CycleGan(loaded) = &back.state else { return Err("wrong kind after load".into()) };
    for (name, a, b) in [("G", &state.g, &loaded.g), ("F", &state.f, &loaded.f), ("D_X", &state.d_x, &loaded.d_x), ("D_Y", &state.d_y, &loaded.d_y)] {
        let (ya, yb) = (a.infer(&xb).map_err(|e| e.to_string())?, b.infer(&xb).map_err(|e| e.to_string())?);
        let same = ya.data().iter().zip(yb.data()).all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || format!("{name} forward differs after reload"))?;
    }
    ensure(back == ck, || "checkpoint round trip changed the state".into())?;

    let weights = dir.path().join("weights.bin");
    let mut bytes = fs::read(&weights).map_err(|e| e.to_string())?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    fs::write(&weights, &bytes).map_err(|e| e.to_string())?;
    let flipped = load_checkpoint(dir.path());
    ensure(matches!(flipped, Err(Error::Corruption(_))), || format!("bit flip accepted: {:?}", flipped.err()))?;
    bytes.truncate(mid);
    fs::write(&weights, &bytes).map_err(|e| e.to_string())?;
    ensure(matches!(load_checkpoint(dir.path()), Err(Error::Corruption(_))), || "truncation accepted".into())?;
    Ok(format!("10-step history.csv identical ({} bytes); reload bit-identical for G, F, D_X, D_Y; bit flip and truncation rejected", a.len()))
}

fn c8_data_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (dtype, lo, hi) in [(NiftiDtype::I16, -32768i32, 32767i32), (NiftiDtype::U8, 0, 255)] {
        for big_endian in [false, true] {
            let dims = [5, 7, 9];
            let voxels: Vec<f64> = (0..dims.iter().product::<usize>()).map(|_| rng.random_range(lo..=hi) as f64).collect();
            let vol = Volume::new(voxels, dims, [1.0, 1.5, 2.0], "rt").map_err(|e| e.to_string())?;
            let opts = NiftiWriteOptions { dtype, big_endian, ..Default::default() };
            let back = parse_nifti(&encode_nifti(&vol, opts), "rt").map_err(|e| e.to_string())?;
            ensure(back.voxels == vol.voxels && back.dims == vol.dims, || format!("{dtype:?} round trip (big endian {big_endian})"))?;
        }
    }
    let dummy = |n: usize| -> Vec<SliceImage> {
        (0..n)
            .map(|i| SliceImage::new(vec![0.0; 4], 2, 2, Provenance { source_id: format!("v{}", i / 10), slice_index: i % 10 }, DomainTag::Source3T).unwrap())
            .collect()
    };
    for (n, train, test) in [(350, 245, 105), (160, 112, 48)] {
        let ds = split_dataset(dummy(n), 0.7, 1).map_err(|e| e.to_string())?;
        ensure(ds.train.len() == train && ds.test.len() == test, || format!("{n} -> {}/{}", ds.train.len(), ds.test.len()))?;
    }
    let mut cases = 0;
    for (h, w, size) in [(31, 47, 64), (256, 256, 256), (300, 200, 64), (10, 10, 256), (64, 64, 16)] {
        for scale in [1.0, 4095.0, -3.0] {
            let px: Vec<f64> = (0..h * w).map(|_| scale * rng.random::<f64>()).collect();
            let img = SliceImage::new(px, h, w, Provenance { source_id: "s".into(), slice_index: 0 }, DomainTag::Synthetic).unwrap();
            let out = standardize(&img, size);
            ensure(out.height == size && out.width == size && out.pixels.len() == size * size, || format!("{h}x{w} -> {size}"))?;
            ensure(out.pixels.iter().all(|v| (0.0..=1.0).contains(v)), || format!("{h}x{w} -> {size} leaves [0,1]"))?;
            cases += 1;
        }
    }
    Ok(format!("NIfTI int16/uint8 (LE and BE) exact; 350 -> 245/105, 160 -> 112/48; standardize exact size in [0,1] on {cases} cases"))
}

fn c9_evaluation() -> Outcome {
    let ident = common::fixture_cyclegan(32, vec![], vec![]);
    let TrainState::CycleGan(s) = &ident.state else { unreachable!() };
    let (x, y) = common::phantom_pair(20, 32, 6);
    for (dir, test) in [(Direction::Forward, &x.test), (Direction::Backward, &y.test)] {
        let r = evaluate_cycle(&s.g, &s.f, test, dir, 200, 1, "identity").map_err(|e| e.to_string())?;
        ensure(r.samples.iter().all(|p| p.mae_sum == 0.0 && p.mse == 0.0), || "identity fixture has non-zero error".into())?;
        ensure(r.n_infinite_psnr == r.n_samples && r.psnr.is_none(), || format!("{} of {} PSNRs infinite", r.n_infinite_psnr, r.n_samples))?;
        let (text, _) = format_report(&[r]);
        ensure(text.lines().nth(2).is_some_and(|l| l.contains("inf")), || format!("infinite PSNR not flagged:\n{text}"))?;
    }

    let darken = common::fixture_cyclegan(32, vec![LayerSpec::Rescale { scale: 0.9, offset: 0.0 }], vec![]);
    let TrainState::CycleGan(s) = &darken.state else { unreachable!() };
    let (x, _) = common::phantom_pair(350, 32, 9);
    ensure(x.test.len() == 105, || format!("test split has {} images", x.test.len()))?;
    let run = |seed| evaluate_cycle(&s.g, &s.f, &x.test, Direction::Forward, 1000, seed, "CycleGAN 3T to 1.5T").map_err(|e| e.to_string());
    let (a, b, other) = (run(5)?, run(5)?, run(6)?);
    ensure(a.n_samples == 1000, || format!("{} samples", a.n_samples))?;
    ensure(a == b, || "same seed gave different reports".into())?;
    ensure(a.samples != other.samples, || "different seeds drew identical samples".into())?;
    let (ta, ca) = format_report(std::slice::from_ref(&a));
    let (tb, cb) = format_report(&[b]);
    ensure(ta == tb && ca == cb, || "report text not byte-stable".into())?;
    ensure(ta.starts_with("Model "), || format!("unexpected table:\n{ta}"))?;
    Ok(format!("identity fixture: all errors 0, all PSNR infinite and flagged; n=1000 over 105 images reproducible: {}", ta.lines().nth(2).unwrap_or("").trim()))
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "metric-oracle equivalence", c1_metric_oracle),
        (2, "consistency of reporting conventions", c2_conventions),
        (3, "architecture invariants", c3_architecture),
        (4, "gradient checks", c4_gradients),
        (5, "CycleGAN smoke training", c5_cyclegan_smoke),
        (6, "DCGAN smoke training", c6_dcgan_smoke),
        (7, "determinism and persistence", c7_determinism),
        (8, "data pipeline", c8_data_pipeline),
        (9, "evaluation protocol", c9_evaluation),
    ];
    // written to the stderr handle directly so the lines show even when libtest
    // captures test output; the leading newline ends libtest's "test acceptance ... "
    let mut err = std::io::stderr();
    let _ = writeln!(err);
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => {
                let _ = writeln!(err, "criterion {id}: PASS  {name}: {detail}");
            }
            Err(why) => {
                let _ = writeln!(err, "criterion {id}: FAIL  {name}: {why}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
