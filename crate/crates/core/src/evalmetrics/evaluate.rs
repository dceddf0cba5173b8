//! The sampling protocols behind the reported numbers: reconstruction quality
//! of a cycle, and synthesis quality of a latent-variable generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mae_sum, mse, psnr_from_mse, ImageView};
use super::report::{MetricSample, MetricsReport};
use crate::datapipe::batch::to_tensor;
use crate::datapipe::slices::{resize_bilinear, SliceImage};
use crate::error::{Error, Result};
use crate::gantrain::sample_latent;
use crate::models::NetworkState;
use crate::nncore::Tensor4;

const EVAL_BATCH: usize = 8;

/// An image-to-image mapping (a trained generator, or a fixture).
pub trait ImageMap: Sync {
    fn apply(&self, images: &Tensor4<f32>) -> Result<Tensor4<f32>>;
}

impl ImageMap for NetworkState<f32> {
    fn apply(&self, images: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        self.infer(images)
    }
}

/// The identity mapping.
pub struct IdentityMap;

impl ImageMap for IdentityMap {
    fn apply(&self, images: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        Ok(images.clone())
    }
}

/// A generator of images from latent codes.
pub trait Synthesizer {
    fn latent_dim(&self) -> usize;
    fn generate(&self, z: &Tensor4<f32>) -> Result<Tensor4<f32>>;
}

impl Synthesizer for NetworkState<f32> {
    fn latent_dim(&self) -> usize {
        self.spec.input_shape[0]
    }

    fn generate(&self, z: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        self.infer(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// x vs F(G(x)) on the source test split.
    Forward,
    /// y vs G(F(y)) on the target test split.
    Backward,
}

fn sample_of(pair_id: usize, reference: &[f64], other: &[f64], h: usize, w: usize) -> Result<MetricSample> {
    let a = ImageView::new(reference, h, w)?;
    let b = ImageView::new(other, h, w)?;
    let m = mse(&a, &b)?;
    Ok(MetricSample {
        pair_id,
        mae_sum: mae_sum(&a, &b)?,
        mse: m,
        psnr_db: psnr_from_mse(m, 1.0),
    })
}

fn plane(t: &Tensor4<f32>, n: usize) -> Vec<f64> {
    t.sample(n)[..t.plane_len()].iter().map(|&v| v as f64).collect()
}

/// Draw `n` test images uniformly with replacement (seeded) and compare each
/// with its round trip through both generators. `g` maps source to target,
/// `f` target to source; `test_set` is the split of the direction's input domain.
pub fn evaluate_cycle(
    g: &dyn ImageMap,
    f: &dyn ImageMap,
    test_set: &[SliceImage],
    direction: Direction,
    n: usize,
    seed: u64,
    label: &str,
) -> Result<MetricsReport> {
    if test_set.is_empty() {
        return Err(Error::Dataset("evaluation test split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..test_set.len())).collect();
    let (first, second) = match direction {
        Direction::Forward => (g, f),
        Direction::Backward => (f, g),
    };
    // each distinct image only needs one round trip
    let mut distinct = picks.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut recon: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; test_set.len()];
    for chunk in distinct.chunks(EVAL_BATCH) {
        let imgs: Vec<&SliceImage> = chunk.iter().map(|&i| &test_set[i]).collect();
        let input = to_tensor::<f32>(&imgs)?;
        let out = second.apply(&first.apply(&input)?)?;
        input.check_same_shape(&out)?;
        for (k, &i) in chunk.iter().enumerate() {
            // compare against the single-precision input the networks actually saw
            recon[i] = Some((plane(&input, k), plane(&out, k)));
        }
    }
    let (h, w) = (test_set[0].height, test_set[0].width);
    let samples = picks
        .iter()
        .map(|&i| {
            let (a, b) = recon[i].as_ref().expect("every pick was reconstructed");
            sample_of(i, a, b, h, w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_samples(label, samples, h * w))
}

/// Generate `n` images from standard-normal codes, upsample each to the test
/// images' resolution, pair it with a uniformly drawn real test image, and
/// score the pair.
pub fn evaluate_synthesis(
    generator: &dyn Synthesizer,
    test_set: &[SliceImage],
    n: usize,
    seed: u64,
    label: &str,
) -> Result<MetricsReport> {
    if test_set.is_empty() {
        return Err(Error::Dataset("evaluation test split is empty".into()));
    }
    let (h, w) = (test_set[0].height, test_set[0].width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut done = 0;
    while done < n {
        let m = EVAL_BATCH.min(n - done);
        let z = sample_latent(m, generator.latent_dim(), &mut rng);
        let pairs: Vec<usize> = (0..m).map(|_| rng.random_range(0..test_set.len())).collect();
        let out = generator.generate(&z)?;
        for (k, &j) in pairs.iter().enumerate() {
            let real = &test_set[j];
            let fake = resize_bilinear(&plane(&out, k), out.height(), out.width(), h, w);
            samples.push(sample_of(j, &real.pixels, &fake, real.height, real.width)?);
        }
        done += m;
    }
    Ok(MetricsReport::from_samples(label, samples, h * w))
}
