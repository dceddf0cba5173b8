//! Binary PGM (P5) images. Writes 16-bit (maxval 65535); reads 8- or 16-bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A grayscale image with intensities in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

pub fn encode_pgm16(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 2);
    for &v in &img.pixels {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm16(img)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, got {}", tokens[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM geometry {width}x{height} maxval {maxval}")));
    }
    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PGM raster truncated: need {need} bytes")))?;
    let scale = 1.0 / maxval as f64;
    let pixels = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 * scale).collect()
    };
    Ok(GrayImage { width, height, pixels })
}

/// Tile equally sized images into a `rows x cols` grid with a 2-pixel gutter.
pub fn grid(images: &[GrayImage], cols: usize) -> Result<GrayImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::Parameter("grid needs at least one image".into()))?;
    let (w, h) = (first.width, first.height);
    if images.iter().any(|i| i.width != w || i.height != h) {
        return Err(Error::Parameter("grid images must share a size".into()));
    }
    let cols = cols.max(1);
    let rows = images.len().div_ceil(cols);
    let gap = 2;
    let gw = cols * w + (cols - 1) * gap;
    let gh = rows * h + (rows - 1) * gap;
    let mut pixels = vec![0.0; gw * gh];
    for (k, img) in images.iter().enumerate() {
        let (r, c) = (k / cols, k % cols);
        for y in 0..h {
            let dst = (r * (h + gap) + y) * gw + c * (w + gap);
            pixels[dst..dst + w].copy_from_slice(&img.pixels[y * w..(y + 1) * w]);
        }
    }
    Ok(GrayImage {
        width: gw,
        height: gh,
        pixels,
    })
}
