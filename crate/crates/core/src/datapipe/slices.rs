//! Axial slice extraction and per-slice standardization.

use serde::{Deserialize, Serialize};

use super::nifti::Volume;
use super::pgm::GrayImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "source_3T")]
    Source3T,
    #[serde(rename = "target_1p5T")]
    Target1p5T,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source3T => "source_3T",
            DomainTag::Target1p5T => "target_1p5T",
            DomainTag::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source_3T" | "3t" | "3T" | "source" => Ok(DomainTag::Source3T),
            "target_1p5T" | "1.5t" | "1.5T" | "target" => Ok(DomainTag::Target1p5T),
            "synthetic" => Ok(DomainTag::Synthetic),
            other => Err(Error::Dataset(format!("unknown domain tag {other:?}"))),
        }
    }
}

impl std::fmt::Display for DomainTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a slice came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub slice_index: usize,
}

/// A single-channel 2-D image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceImage {
    pub pixels: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub provenance: Provenance,
    pub domain: DomainTag,
}

impl SliceImage {
    pub fn new(
        pixels: Vec<f64>,
        height: usize,
        width: usize,
        provenance: Provenance,
        domain: DomainTag,
    ) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Dimension {
                axis: "pixels",
                expected: height * width,
                actual: pixels.len(),
            });
        }
        Ok(Self { pixels, height, width, provenance, domain })
    }

    pub fn from_gray(img: GrayImage, provenance: Provenance, domain: DomainTag) -> Self {
        Self {
            height: img.height,
            width: img.width,
            pixels: img.pixels,
            provenance,
            domain,
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicePolicy {
    /// Evenly spaced across the central 60% of the slice axis.
    #[default]
    CenteredUniform,
    /// Every slice, in order (`count` must equal the slice count).
    All,
}

/// Slice indices chosen by `policy` for a volume with `slices` axial slices.
pub fn slice_indices(slices: usize, count: usize, policy: SlicePolicy) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::Dataset("slice count must be >= 1".into()));
    }
    if slices < count {
        return Err(Error::Dataset(format!(
            "volume has {slices} slices, fewer than the {count} requested"
        )));
    }
    match policy {
        SlicePolicy::All => Ok((0..slices).collect()),
        SlicePolicy::CenteredUniform => {
            let lo = slices / 5;
            let span = slices - 2 * lo;
            // thin volumes: fall back to the whole axis rather than repeat slices
            let (lo, span) = if span >= count { (lo, span) } else { (0, slices) };
            Ok((0..count).map(|i| lo + i * span / count).collect())
        }
    }
}

/// Raw-intensity axial slices of `volume` (not yet normalized).
pub fn extract_slices(
    volume: &Volume,
    count: usize,
    policy: SlicePolicy,
    domain: DomainTag,
) -> Result<Vec<SliceImage>> {
    let [_, rows, cols] = volume.dims;
    slice_indices(volume.slice_count(), count, policy)?
        .into_iter()
        .map(|z| {
            SliceImage::new(
                volume.slice(z).to_vec(),
                rows,
                cols,
                Provenance {
                    source_id: volume.source_id.clone(),
                    slice_index: z,
                },
                domain,
            )
        })
        .collect()
}

/// Min-max scale to [0, 1] (a constant slice becomes all zeros).
pub fn min_max(pixels: &[f64]) -> Vec<f64> {
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; pixels.len()];
    }
    pixels.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
}

/// Bilinear resize with corner-aligned sampling, so the four corner pixels
/// are preserved and a same-size resize is the identity.
pub fn resize_bilinear(pixels: &[f64], height: usize, width: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    if (height, width) == (out_h, out_w) {
        return pixels.to_vec();
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| coord(x, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, height, out_h);
        let (r0, r1) = (&pixels[y0 * width..][..width], &pixels[y1 * width..][..width]);
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Min-max normalize then resize to `image_size` x `image_size`.
pub fn standardize(slice: &SliceImage, image_size: usize) -> SliceImage {
    let scaled = min_max(&slice.pixels);
    let pixels = resize_bilinear(&scaled, slice.height, slice.width, image_size, image_size)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    SliceImage {
        pixels,
        height: image_size,
        width: image_size,
        provenance: slice.provenance.clone(),
        domain: slice.domain,
    }
}

/// Resize an image already in [0, 1] without renormalizing.
pub fn resize_image(slice: &SliceImage, image_size: usize) -> SliceImage {
    SliceImage {
        pixels: resize_bilinear(&slice.pixels, slice.height, slice.width, image_size, image_size),
        height: image_size,
        width: image_size,
        provenance: slice.provenance.clone(),
        domain: slice.domain,
    }
}
