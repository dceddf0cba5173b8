//! Single-file NIfTI-1 (`.nii`) reader and writer for uint8, int16 and float32 volumes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
const MAGIC: &[u8; 4] = b"n+1\0";

/// A 3-D scan stored slice-major: `voxels[(z * rows + y) * cols + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub voxels: Vec<f64>,
    /// (slices, rows, cols)
    pub dims: [usize; 3],
    /// Voxel size in mm along (x, y, z).
    pub spacing: [f64; 3],
    pub source_id: String,
}

impl Volume {
    pub fn new(voxels: Vec<f64>, dims: [usize; 3], spacing: [f64; 3], source_id: impl Into<String>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::UnsupportedShape(format!("volume dims must be >= 1, got {dims:?}")));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::Dimension {
                axis: "voxels",
                expected: dims.iter().product(),
                actual: voxels.len(),
            });
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("volume contains non-finite voxels".into()));
        }
        Ok(Self {
            voxels,
            dims,
            spacing,
            source_id: source_id.into(),
        })
    }

    pub fn slice_count(&self) -> usize {
        self.dims[0]
    }

    pub fn slice(&self, z: usize) -> &[f64] {
        let plane = self.dims[1] * self.dims[2];
        &self.voxels[z * plane..(z + 1) * plane]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NiftiDtype {
    U8,
    I16,
    F32,
}

impl NiftiDtype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDtype::U8 => 2,
            NiftiDtype::I16 => 4,
            NiftiDtype::F32 => 16,
        }
    }

    fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(NiftiDtype::U8),
            4 => Ok(NiftiDtype::I16),
            16 => Ok(NiftiDtype::F32),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    fn bytes(self) -> usize {
        match self {
            NiftiDtype::U8 => 1,
            NiftiDtype::I16 => 2,
            NiftiDtype::F32 => 4,
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.buf[at..at + N]);
        if self.big_endian {
            b.reverse();
        }
        b
    }

    fn i16(&self, at: usize) -> i16 {
        i16::from_le_bytes(self.bytes(at))
    }

    fn f32(&self, at: usize) -> f32 {
        f32::from_le_bytes(self.bytes(at))
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let source_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("volume")
        .trim_end_matches(".nii")
        .to_string();
    parse_nifti(&buf, &source_id).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_nifti(buf: &[u8], source_id: &str) -> Result<Volume> {
    if buf.len() < HEADER_SIZE {
        return Err(Error::io(
            source_id,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "header shorter than 348 bytes"),
        ));
    }
    if &buf[344..348] != MAGIC {
        return Err(Error::Format(format!(
            "bad NIfTI magic {:?}, expected \"n+1\"",
            String::from_utf8_lossy(&buf[344..347])
        )));
    }
    let le_dim0 = i16::from_le_bytes([buf[40], buf[41]]);
    let big_endian = !(1..=7).contains(&le_dim0);
    let r = Reader { buf, big_endian };

    let dim: Vec<i16> = (0..8).map(|i| r.i16(40 + 2 * i)).collect();
    if !(1..=7).contains(&dim[0]) {
        return Err(Error::Format(format!("dim[0] = {} is outside [1, 7]", dim[0])));
    }
    let rank = dim[0] as usize;
    let spatial_ok = rank == 3 || (rank == 4 && dim[4] == 1);
    if !spatial_ok {
        return Err(Error::UnsupportedShape(format!(
            "expected a 3-D volume, got dim[0] = {rank} with dims {:?}",
            &dim[1..=rank]
        )));
    }
    if dim[1..=3].iter().any(|&d| d < 1) {
        return Err(Error::UnsupportedShape(format!("non-positive extent in {:?}", &dim[1..=3])));
    }
    let (nx, ny, nz) = (dim[1] as usize, dim[2] as usize, dim[3] as usize);
    let dtype = NiftiDtype::from_code(r.i16(70))?;
    let pixdim: Vec<f32> = (0..8).map(|i| r.f32(76 + 4 * i)).collect();
    let vox_offset = r.f32(108);
    let slope = r.f32(112);
    let inter = r.f32(116);

    let offset = if vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        HEADER_SIZE + 4
    };
    let count = nx * ny * nz;
    let need = offset + count * dtype.bytes();
    if buf.len() < need {
        return Err(Error::io(
            source_id,
            std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("data section truncated: need {need} bytes, file has {}", buf.len()),
            ),
        ));
    }
    let data = &buf[offset..need];
    let rd = Reader { buf: data, big_endian };
    let raw: Vec<f64> = match dtype {
        NiftiDtype::U8 => data.iter().map(|&b| b as f64).collect(),
        NiftiDtype::I16 => (0..count).map(|i| rd.i16(2 * i) as f64).collect(),
        NiftiDtype::F32 => (0..count).map(|i| rd.f32(4 * i) as f64).collect(),
    };
    let voxels = if slope != 0.0 && slope.is_finite() {
        let (s, b) = (slope as f64, if inter.is_finite() { inter as f64 } else { 0.0 });
        raw.into_iter().map(|v| v * s + b).collect()
    } else {
        raw
    };
    let spacing = [pixdim[1] as f64, pixdim[2] as f64, pixdim[3] as f64];
    Volume::new(voxels, [nz, ny, nx], spacing, source_id)
}

/// Options for [`encode_nifti`].
#[derive(Clone, Copy, Debug)]
pub struct NiftiWriteOptions {
    pub dtype: NiftiDtype,
    pub big_endian: bool,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl Default for NiftiWriteOptions {
    fn default() -> Self {
        Self {
            dtype: NiftiDtype::F32,
            big_endian: false,
            scl_slope: 0.0,
            scl_inter: 0.0,
        }
    }
}

/// Encode `volume`'s voxels as stored values (no inverse scaling is applied:
/// the caller chooses slope/intercept for the file).
pub fn encode_nifti(volume: &Volume, opts: NiftiWriteOptions) -> Vec<u8> {
    let [nz, ny, nx] = volume.dims;
    let mut h = vec![0u8; HEADER_SIZE + 4];
    let be = opts.big_endian;
    let put = |h: &mut Vec<u8>, at: usize, bytes: &[u8]| {
        let mut b = bytes.to_vec();
        if be {
            b.reverse();
        }
        h[at..at + b.len()].copy_from_slice(&b);
    };
    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    let dims: [i16; 8] = [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        put(&mut h, 40 + 2 * i, &d.to_le_bytes());
    }
    put(&mut h, 70, &opts.dtype.code().to_le_bytes());
    put(&mut h, 72, &((opts.dtype.bytes() * 8) as i16).to_le_bytes());
    let pixdim = [1.0f32, volume.spacing[0] as f32, volume.spacing[1] as f32, volume.spacing[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut h, 76 + 4 * i, &p.to_le_bytes());
    }
    put(&mut h, 108, &((HEADER_SIZE + 4) as f32).to_le_bytes());
    put(&mut h, 112, &opts.scl_slope.to_le_bytes());
    put(&mut h, 116, &opts.scl_inter.to_le_bytes());
    h[344..348].copy_from_slice(MAGIC);

    for &v in &volume.voxels {
        match opts.dtype {
            NiftiDtype::U8 => h.push(v.round().clamp(0.0, 255.0) as u8),
            NiftiDtype::I16 => {
                let b = (v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes();
                if be {
                    h.extend(b.iter().rev());
                } else {
                    h.extend(b);
                }
            }
            NiftiDtype::F32 => {
                let b = (v as f32).to_le_bytes();
                if be {
                    h.extend(b.iter().rev());
                } else {
                    h.extend(b);
                }
            }
        }
    }
    h
}

pub fn write_nifti(path: impl AsRef<Path>, volume: &Volume, opts: NiftiWriteOptions) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_nifti(volume, opts)).map_err(|e| Error::io(path, e))
}
