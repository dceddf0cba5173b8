mod common;

use fieldshift::datapipe::{DomainTag, Provenance, SliceImage};
use fieldshift::evalmetrics::{
    evaluate_cycle, evaluate_synthesis, format_report, mae_sum, mse, psnr, Direction, IdentityMap, ImageView,
    MetricsReport, Stat, Synthesizer,
};
use fieldshift::nncore::Tensor4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward row/column loops, written independently of the library.
fn naive(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64, f64) {
    let mut abs = 0.0;
    let mut sq = 0.0;
    for r in 0..h {
        for c in 0..w {
            let d = a[r * w + c] - b[r * w + c];
            abs += d.abs();
            sq += d * d;
        }
    }
    let m = sq / (h * w) as f64;
    (abs, m, 10.0 * (1.0 / m).log10())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn reference_rows() -> Vec<MetricsReport> {
    let px = 256 * 256;
    vec![
        MetricsReport::from_summary("CycleGAN 3T to 1.5T", 1000, Stat::new(2106.27, 1218.37), Stat::new(0.00328, 0.0032), Stat::new(25.69, 2.49), px),
        MetricsReport::from_summary("CycleGAN 1.5T to 3T", 1000, Stat::new(602.27, 147.41), Stat::new(0.00189, 0.0013), Stat::new(27.22, 0.30), px),
        MetricsReport::from_summary("DCGAN 1.5T", 1000, Stat::new(31907.44, 415.85), Stat::new(0.24, 0.0059), Stat::new(6.20, 0.11), px),
        MetricsReport::from_summary("DCGAN 3T", 1000, Stat::new(22559.57, 1875.35), Stat::new(0.14, 0.021), Stat::new(8.68, 0.76), px),
    ]
}

fn slices(n: usize, size: usize, seed: u64) -> Vec<SliceImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let px = (0..size * size).map(|_| rng.random::<f64>()).collect();
            SliceImage::new(px, size, size, Provenance { source_id: format!("s{i}"), slice_index: 0 }, DomainTag::Synthetic)
                .unwrap()
        })
        .collect()
}

#[test]
fn metrics_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (h, w) in [(17, 23), (64, 64), (256, 256)] {
        for _ in 0..34 {
            let a: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..h * w).map(|_| rng.random()).collect();
            let (va, vb) = (ImageView::new(&a, h, w).unwrap(), ImageView::new(&b, h, w).unwrap());
            let (s, m, p) = naive(&a, &b, h, w);
            let (ls, lm, lp) = (mae_sum(&va, &vb).unwrap(), mse(&va, &vb).unwrap(), psnr(&va, &vb, 1.0).unwrap());
            assert!(rel(s, ls) < 1e-12 && rel(m, lm) < 1e-12 && rel(p, lp) < 1e-12);
            // Jensen: mean |d| <= sqrt(mean d^2)
            assert!(ls / (h * w) as f64 <= lm.sqrt() + 1e-12);
            assert_eq!(lp, 10.0 * (1.0 / lm).log10());
        }
    }
}

#[test]
fn aggregation_matches_streaming_welford() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let values: Vec<f64> = (0..1000).map(|_| 2000.0 + 1200.0 * rng.random::<f64>()).collect();
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let sd = (m2 / (values.len() - 1) as f64).sqrt();
    let s = Stat::of(&values).unwrap();
    assert!(rel(s.mean, mean) < 1e-9 && rel(s.sd, sd) < 1e-9);
}

#[test]
fn conventions_agree_with_reference_rows() {
    let p = |m: f64| -10.0 * m.log10();
    // row 1 MSE -> PSNR lands inside the row's reported PSNR +/- SD
    assert!((p(0.00328) - 24.84).abs() < 0.005);
    assert!(p(0.00328) >= 25.69 - 2.49 && p(0.00328) <= 25.69 + 2.49);
    // rows 3 and 4: summed MAE over 256^2 pixels ~ sqrt(MSE) in a near-constant error regime
    assert!((p(0.24) - 6.20).abs() < 0.01);
    assert!((31907.44 / 65536.0 - 0.24f64.sqrt()).abs() < 0.005);
    assert!((22559.57 / 65536.0 - 0.14f64.sqrt()).abs() < 0.04);
    // row 1 under the sum convention respects Jensen against its MSE
    assert!(2106.27 / 65536.0 <= 0.00328f64.sqrt());
}

#[test]
fn reference_fixture_renders_golden_text() {
    let (text, csv) = format_report(&reference_rows());
    let golden = "\
Model                MAE ± SD            MSE ± SD           PSNR (dB) ± SD  n
--------------------------------------------------------------------------------
CycleGAN 3T to 1.5T  2106.27 ± 1218.37   0.00328 ± 0.00320  25.69 ± 2.49    1000
CycleGAN 1.5T to 3T  602.27 ± 147.41     0.00189 ± 0.00130  27.22 ± 0.30    1000
DCGAN 1.5T           31907.44 ± 415.85   0.24000 ± 0.00590  6.20 ± 0.11     1000
DCGAN 3T             22559.57 ± 1875.35  0.14000 ± 0.02100  8.68 ± 0.76     1000
";
    assert_eq!(text, golden, "\n{text}");
    assert_eq!(format_report(&reference_rows()).0, text);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("model,mae_mean,mae_sd,mse_mean,mse_sd,psnr_mean,psnr_sd,n,n_infinite_psnr,mae_mean_per_pixel\n"));
    assert!(csv.contains("\nDCGAN 1.5T,31907.44,415.85,0.24,0.0059,6.2,0.11,1000,0,0.486868896484375\n"));
}

#[test]
fn identity_generators_reconstruct_perfectly() {
    let test = slices(7, 16, 3);
    for dir in [Direction::Forward, Direction::Backward] {
        let r = evaluate_cycle(&IdentityMap, &IdentityMap, &test, dir, 50, 4, "identity").unwrap();
        assert_eq!(r.n_samples, 50);
        assert_eq!(r.n_infinite_psnr, 50);
        assert!(r.samples.iter().all(|s| s.mae_sum == 0.0 && s.mse == 0.0 && s.psnr_db == f64::INFINITY));
    }
}

#[test]
fn thousand_draws_from_105_images_are_seeded() {
    let test = slices(105, 16, 5);
    struct Darken;
    impl fieldshift::evalmetrics::ImageMap for Darken {
        fn apply(&self, x: &Tensor4<f32>) -> fieldshift::Result<Tensor4<f32>> {
            Ok(x.map(|v| 0.9 * v))
        }
    }
    let run = |seed| evaluate_cycle(&Darken, &IdentityMap, &test, Direction::Forward, 1000, seed, "darken").unwrap();
    let a = run(11);
    assert_eq!(a.n_samples, 1000);
    assert!(a.samples.iter().all(|s| s.pair_id < 105));
    assert_eq!(a, run(11));
    assert_ne!(a.samples, run(12).samples);
    assert_eq!(format_report(&[a.clone()]), format_report(&[run(11)]));
}

struct Constant(f32);

impl Synthesizer for Constant {
    fn latent_dim(&self) -> usize {
        5
    }
    fn generate(&self, z: &Tensor4<f32>) -> fieldshift::Result<Tensor4<f32>> {
        Ok(Tensor4::filled([z.batch(), 1, 8, 8], self.0))
    }
}

#[test]
fn constant_synthesizer_has_closed_form_errors() {
    let test = slices(9, 32, 6);
    let r = evaluate_synthesis(&Constant(0.5), &test, 40, 7, "half").unwrap();
    for s in &r.samples {
        let real = &test[s.pair_id].pixels;
        let want: f64 = real.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>() / real.len() as f64;
        assert!(rel(s.mse, want) < 1e-12);
    }
    // uniform noise images all sit near 1/12 from 0.5, so the spread is small
    assert!(r.mse.unwrap().sd < 0.01);
    assert_eq!(r, evaluate_synthesis(&Constant(0.5), &test, 40, 7, "half").unwrap());
    assert!(evaluate_synthesis(&Constant(0.5), &[], 4, 7, "x").is_err());
}
