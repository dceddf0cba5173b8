//! Synthetic head phantoms standing in for clinical 3T / 1.5T slices.
//!
//! Every phantom is a stack of soft-edged ellipses (skull ring, gray matter,
//! white matter, two ventricles) with per-image random geometry. Image `i`
//! shares its geometry across domains, so a source/target pair differs only by
//! the domain transform: the target has its intensities scaled by 0.7, a
//! light 3x3 blur and stronger noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::nifti::Volume;
use super::slices::{DomainTag, Provenance, SliceImage};
use super::split::{split_dataset, SliceDataset, DEFAULT_TRAIN_FRACTION};
use crate::error::{Error, Result};

pub const SOURCE_NOISE_SIGMA: f64 = 0.02;
pub const TARGET_NOISE_SIGMA: f64 = 0.06;
pub const TARGET_CONTRAST: f64 = 0.7;

const GEOMETRY_STREAM: u64 = 0x6765_6f6d;

#[derive(Clone, Debug)]
struct Geometry {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    brain: f64,
    wm: f64,
    vent_dx: f64,
    vent_a: f64,
    vent_b: f64,
    skull_level: f64,
    gm_level: f64,
    wm_level: f64,
    csf_level: f64,
}

impl Geometry {
    fn sample(rng: &mut impl Rng) -> Self {
        Self {
            cx: 0.5 + rng.random_range(-0.01..0.01),
            cy: 0.5 + rng.random_range(-0.01..0.01),
            a: rng.random_range(0.49..0.53),
            b: rng.random_range(0.46..0.5),
            theta: rng.random_range(-0.25..0.25),
            brain: rng.random_range(0.86..0.92),
            wm: rng.random_range(0.7..0.82),
            vent_dx: rng.random_range(0.08..0.16),
            vent_a: rng.random_range(0.04..0.07),
            vent_b: rng.random_range(0.1..0.16),
            skull_level: rng.random_range(0.88..0.98),
            gm_level: rng.random_range(0.8..0.88),
            wm_level: rng.random_range(0.95..1.0),
            csf_level: rng.random_range(0.2..0.3),
        }
    }
}

/// Smooth inside-indicator of an ellipse (1 inside, 0 outside).
fn soft(r: f64, edge: f64) -> f64 {
    1.0 / (1.0 + ((r - 1.0) / edge).exp())
}

/// Noise-free source-contrast rendering; `zfrac` in [-1, 1] shrinks the
/// cross-section as an ellipsoid would away from its equator.
fn render(size: usize, g: &Geometry, zfrac: f64) -> Vec<f64> {
    let shrink = (1.0 - zfrac * zfrac).max(0.0).sqrt().max(0.25);
    let (c, s) = (g.theta.cos(), g.theta.sin());
    let edge = (3.0 / size as f64).max(0.015);
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let px = (x as f64 + 0.5) / size as f64 - g.cx;
            let py = (y as f64 + 0.5) / size as f64 - g.cy;
            let u = (c * px + s * py) / shrink;
            let v = (-s * px + c * py) / shrink;
            let r = |a: f64, b: f64, du: f64| (((u - du) / a).powi(2) + (v / b).powi(2)).sqrt();
            let head = soft(r(g.a, g.b, 0.0), edge);
            let brain = soft(r(g.a * g.brain, g.b * g.brain, 0.0), edge);
            let wm = soft(r(g.a * g.wm, g.b * g.wm, 0.0), edge);
            let vent = soft(r(g.vent_a, g.vent_b, -g.vent_dx), edge).max(soft(r(g.vent_a, g.vent_b, g.vent_dx), edge));
            let mut val = g.skull_level * head;
            val += (g.gm_level - g.skull_level) * brain;
            val += (g.wm_level - g.gm_level) * wm;
            val += (g.csf_level - g.wm_level) * vent * wm;
            out.push(val.clamp(0.0, 1.0));
        }
    }
    out
}

fn blur3(px: &[f64], size: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let at = |v: &[f64], y: isize, x: isize| {
        let cy = y.clamp(0, size as isize - 1) as usize;
        let cx = x.clamp(0, size as isize - 1) as usize;
        v[cy * size + cx]
    };
    let mut tmp = vec![0.0; px.len()];
    for y in 0..size as isize {
        for x in 0..size as isize {
            tmp[y as usize * size + x as usize] = (0..3).map(|k| K[k] * at(px, y, x + k as isize - 1)).sum();
        }
    }
    let mut out = vec![0.0; px.len()];
    for y in 0..size as isize {
        for x in 0..size as isize {
            out[y as usize * size + x as usize] = (0..3).map(|k| K[k] * at(&tmp, y + k as isize - 1, x)).sum();
        }
    }
    out
}

fn domain_stream(domain: DomainTag) -> u64 {
    match domain {
        DomainTag::Source3T => 1,
        DomainTag::Target1p5T => 2,
        DomainTag::Synthetic => 3,
    }
}

/// Apply a domain's acquisition model to a clean rendering.
fn acquire(clean: Vec<f64>, size: usize, domain: DomainTag, rng: &mut impl Rng) -> Vec<f64> {
    let (pixels, sigma) = match domain {
        DomainTag::Target1p5T => {
            let scaled: Vec<f64> = clean.iter().map(|v| v * TARGET_CONTRAST).collect();
            (blur3(&scaled, size), TARGET_NOISE_SIGMA)
        }
        DomainTag::Source3T | DomainTag::Synthetic => (clean, SOURCE_NOISE_SIGMA),
    };
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    pixels.into_iter().map(|v| (v + noise.sample(rng)).clamp(0.0, 1.0)).collect()
}

fn geometry_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ GEOMETRY_STREAM);
    rng.set_stream(index);
    rng
}

fn noise_rng(seed: u64, index: u64, domain: DomainTag) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(domain_stream(domain)));
    rng.set_stream(index);
    rng
}

/// Phantom image `index` of the sequence defined by `seed`.
pub fn phantom_image(index: usize, size: usize, domain: DomainTag, seed: u64) -> SliceImage {
    let g = Geometry::sample(&mut geometry_rng(seed, index as u64));
    let pixels = acquire(render(size, &g, 0.0), size, domain, &mut noise_rng(seed, index as u64, domain));
    SliceImage {
        pixels,
        height: size,
        width: size,
        provenance: Provenance {
            source_id: format!("phantom-{seed}-{index:04}"),
            slice_index: 0,
        },
        domain,
    }
}

/// `n` phantom slices split 70/30 with the same seed.
pub fn make_phantom_dataset(n: usize, size: usize, domain: DomainTag, seed: u64) -> Result<SliceDataset> {
    make_phantom_dataset_split(n, size, domain, seed, DEFAULT_TRAIN_FRACTION)
}

/// `n` phantom slices with `train_fraction` of them (floored) used for training.
pub fn make_phantom_dataset_split(n: usize, size: usize, domain: DomainTag, seed: u64, train_fraction: f64) -> Result<SliceDataset> {
    if n < 2 {
        return Err(Error::Dataset(format!("phantom dataset needs n >= 2, got {n}")));
    }
    if size < 16 {
        return Err(Error::Dataset(format!("phantom size must be >= 16, got {size}")));
    }
    let images = (0..n).map(|i| phantom_image(i, size, domain, seed)).collect();
    split_dataset(images, train_fraction, seed)
}

/// A phantom head volume with `slices` axial slices of `size` x `size`,
/// scaled to scanner-like integer intensities (0..=1000).
pub fn make_phantom_volume(index: usize, slices: usize, size: usize, domain: DomainTag, seed: u64) -> Result<Volume> {
    if slices == 0 || size < 16 {
        return Err(Error::Dataset(format!("bad phantom volume geometry {slices}x{size}x{size}")));
    }
    let g = Geometry::sample(&mut geometry_rng(seed, index as u64));
    let mut rng = noise_rng(seed, index as u64, domain);
    let mut voxels = Vec::with_capacity(slices * size * size);
    for z in 0..slices {
        let zfrac = (2.0 * (z as f64 + 0.5) / slices as f64 - 1.0) * 0.95;
        let px = acquire(render(size, &g, zfrac), size, domain, &mut rng);
        voxels.extend(px.into_iter().map(|v| (v * 1000.0).round()));
    }
    let spacing = match domain {
        DomainTag::Target1p5T => [2.0, 2.0, 3.0],
        _ => [2.0, 2.0, 2.0],
    };
    Volume::new(voxels, [slices, size, size], spacing, format!("phantom-{}-{index:03}", domain.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn distinct_reproducible_and_in_range() {
        let a = make_phantom_dataset(16, 64, DomainTag::Source3T, 9).unwrap();
        let b = make_phantom_dataset(16, 64, DomainTag::Source3T, 9).unwrap();
        assert_eq!(a, b);
        let all: Vec<_> = a.train.iter().chain(&a.test).collect();
        assert_eq!(all.len(), 16);
        for (i, x) in all.iter().enumerate() {
            assert!(x.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
            for y in &all[i + 1..] {
                let sad: f64 = x.pixels.iter().zip(&y.pixels).map(|(p, q)| (p - q).abs()).sum();
                assert!(sad > 0.0);
            }
        }
    }

    #[test]
    fn target_is_darker_and_well_separated() {
        let (mut ms, mut mt, mut mad) = (0.0, 0.0, 0.0);
        for i in 0..8 {
            let s = phantom_image(i, 64, DomainTag::Source3T, 5);
            let t = phantom_image(i, 64, DomainTag::Target1p5T, 5);
            ms += mean(&s.pixels);
            mt += mean(&t.pixels);
            mad += s.pixels.iter().zip(&t.pixels).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.pixels.len() as f64;
        }
        assert!(mt < ms, "target {mt} vs source {ms}");
        assert!(mad / 8.0 > 10.0 * SOURCE_NOISE_SIGMA, "paired MAD {}", mad / 8.0);
    }

    #[test]
    fn volume_has_head_in_middle_slices() {
        let v = make_phantom_volume(0, 20, 32, DomainTag::Source3T, 1).unwrap();
        assert_eq!(v.dims, [20, 32, 32]);
        assert!(mean(v.slice(10)) > mean(v.slice(0)));
    }
}
