//! Per-pair image quality metrics on [0, 1] images.

use crate::datapipe::pgm::GrayImage;
use crate::datapipe::slices::SliceImage;
use crate::error::{Error, Result};

/// A borrowed single-channel image.
#[derive(Clone, Copy, Debug)]
pub struct ImageView<'a> {
    pub pixels: &'a [f64],
    pub height: usize,
    pub width: usize,
}

impl<'a> ImageView<'a> {
    pub fn new(pixels: &'a [f64], height: usize, width: usize) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Dimension {
                axis: "pixels",
                expected: height * width,
                actual: pixels.len(),
            });
        }
        Ok(Self { pixels, height, width })
    }
}

impl<'a> From<&'a SliceImage> for ImageView<'a> {
    fn from(s: &'a SliceImage) -> Self {
        Self {
            pixels: &s.pixels,
            height: s.height,
            width: s.width,
        }
    }
}

impl<'a> From<&'a GrayImage> for ImageView<'a> {
    fn from(g: &'a GrayImage) -> Self {
        Self {
            pixels: &g.pixels,
            height: g.height,
            width: g.width,
        }
    }
}

fn same_shape(a: &ImageView<'_>, b: &ImageView<'_>) -> Result<()> {
    if a.height != b.height {
        return Err(Error::Dimension { axis: "height", expected: a.height, actual: b.height });
    }
    if a.width != b.width {
        return Err(Error::Dimension { axis: "width", expected: a.width, actual: b.width });
    }
    Ok(())
}

/// Sum (not mean) of absolute differences over all pixels.
pub fn mae_sum(a: &ImageView<'_>, b: &ImageView<'_>) -> Result<f64> {
    same_shape(a, b)?;
    Ok(a.pixels.iter().zip(b.pixels).map(|(x, y)| (x - y).abs()).sum())
}

/// Mean squared difference per pixel.
pub fn mse(a: &ImageView<'_>, b: &ImageView<'_>) -> Result<f64> {
    same_shape(a, b)?;
    let sse: f64 = a.pixels.iter().zip(b.pixels).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sse / a.pixels.len() as f64)
}

/// `10 log10(max^2 / mse)` in dB; identical images give `+inf`.
pub fn psnr(a: &ImageView<'_>, b: &ImageView<'_>, max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::Parameter(format!("PSNR max value must be > 0, got {max_value}")));
    }
    Ok(psnr_from_mse(mse(a, b)?, max_value))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}
