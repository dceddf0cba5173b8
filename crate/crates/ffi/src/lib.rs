//! C ABI over `fieldshift`: image metrics, synthetic phantoms, and inference
//! with trained checkpoints.
//!
//! Every function returns an [`FsStatus`]; on failure a message is kept per
//! thread and can be copied out with [`fs_last_error_message`]. Images are
//! row-major, single channel, intensities in [0, 1].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use fieldshift::datapipe::{phantom_image, DomainTag};
use fieldshift::evalmetrics::{mae_sum, mse, psnr_from_mse, ImageView};
use fieldshift::gantrain::{load_checkpoint, translate_cycle, TrainState};
use fieldshift::models::NetworkState;
use fieldshift::nncore::Tensor4;
use fieldshift::Error;

/// Result code of every `fs_*` call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent (sizes, enum values).
    InvalidArgument = 2,
    /// A file could not be read.
    Io = 3,
    /// A file was readable but malformed, or a checkpoint failed validation.
    Format = 4,
    /// The checkpoint holds a different kind of model than the call needs.
    WrongModelKind = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsDomain {
    /// 3T acquisition (the translation source).
    Source = 0,
    /// 1.5T acquisition (the translation target).
    Target = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsDirection {
    /// 3T -> 1.5T -> 3T: G then F.
    Forward = 0,
    /// 1.5T -> 3T -> 1.5T: F then G.
    Backward = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FsModelKind {
    Cyclegan = 0,
    Dcgan = 1,
}

/// Error metrics of one image pair. `psnr_db` is +infinity for identical images.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FsMetrics {
    /// Sum of absolute pixel differences.
    pub mae_sum: f64,
    pub mse: f64,
    pub psnr_db: f64,
}

/// A loaded checkpoint, ready for inference. Opaque to C.
pub struct FsModel {
    kind: FsModelKind,
    image_size: usize,
    g: NetworkState<f32>,
    /// The second generator (CycleGAN only).
    f: Option<NetworkState<f32>>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: FsStatus, msg: impl Into<String>) -> FsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn from_error(e: Error) -> FsStatus {
    let status = match e {
        Error::Io { .. } => FsStatus::Io,
        Error::Format(_) | Error::Corruption(_) | Error::Version(_) | Error::UnsupportedDtype(_) => FsStatus::Format,
        _ => FsStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Run `body`, turning errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), FsStatus>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            FsStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(FsStatus::Internal, "internal panic"),
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), FsStatus> {
    if p.is_null() {
        Err(fail(FsStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn pixels(h: usize, w: usize) -> Result<usize, FsStatus> {
    match h.checked_mul(w) {
        Some(n) if n > 0 => Ok(n),
        _ => Err(fail(FsStatus::InvalidArgument, format!("bad image size {h}x{w}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len` bytes). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// MAE (summed), MSE and PSNR (peak 1.0) between two `height` x `width` images.
///
/// # Safety
/// `a` and `b` must point to `height * width` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_metrics(a: *const f64, b: *const f64, height: usize, width: usize, out: *mut FsMetrics) -> FsStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let n = pixels(height, width)?;
        let (a, b) = (slice::from_raw_parts(a, n), slice::from_raw_parts(b, n));
        let va = ImageView::new(a, height, width).map_err(from_error)?;
        let vb = ImageView::new(b, height, width).map_err(from_error)?;
        let m = mse(&va, &vb).map_err(from_error)?;
        *out = FsMetrics {
            mae_sum: mae_sum(&va, &vb).map_err(from_error)?,
            mse: m,
            psnr_db: psnr_from_mse(m, 1.0),
        };
        Ok(())
    })
}

/// Render phantom number `index` of a `size` x `size` set into `out`
/// (`size * size` doubles). `domain` is an [`FsDomain`] value. Equal `index`
/// and `seed` give the same anatomy in both domains.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fs_phantom(index: usize, size: usize, domain: u32, seed: u64, out: *mut f64, out_len: usize) -> FsStatus {
    guard(|| {
        non_null(out, "out")?;
        if size < 16 {
            return Err(fail(FsStatus::InvalidArgument, format!("phantom size must be >= 16, got {size}")));
        }
        let n = pixels(size, size)?;
        if out_len < n {
            return Err(fail(FsStatus::InvalidArgument, format!("out holds {out_len} values, need {n}")));
        }
        let tag = match domain {
            d if d == FsDomain::Source as u32 => DomainTag::Source3T,
            d if d == FsDomain::Target as u32 => DomainTag::Target1p5T,
            d => return Err(fail(FsStatus::InvalidArgument, format!("unknown domain {d}"))),
        };
        let img = phantom_image(index, size, tag, seed);
        slice::from_raw_parts_mut(out, n).copy_from_slice(&img.pixels);
        Ok(())
    })
}

/// Load a checkpoint directory. On success `*out` owns a model that must be
/// released with [`fs_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_model_open(path: *const c_char, out: *mut *mut FsModel) -> FsStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(FsStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let ck = load_checkpoint(Path::new(path)).map_err(from_error)?;
        let image_size = ck.config.image_size;
        let model = match ck.state {
            TrainState::CycleGan(s) => FsModel { kind: FsModelKind::Cyclegan, image_size, g: s.g, f: Some(s.f) },
            TrainState::Dcgan(s) => FsModel { kind: FsModelKind::Dcgan, image_size, g: s.g, f: None },
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Release a model from [`fs_model_open`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a pointer returned by `fs_model_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fs_model_free(model: *mut FsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Kind of model held and the image size it was trained at.
///
/// # Safety
/// `model` must be a live model; `kind` and `image_size` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_model_info(model: *const FsModel, kind: *mut FsModelKind, image_size: *mut usize) -> FsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(kind, "kind")?;
        non_null(image_size, "image_size")?;
        *kind = (*model).kind;
        *image_size = (*model).image_size;
        Ok(())
    })
}

/// Translate `count` images of `height` x `width` with a CycleGAN and map them
/// back. `direction` is an [`FsDirection`] value. `translated` and
/// `reconstructed` receive `count * height * width` floats each.
///
/// # Safety
/// `model` must be live; `images`, `translated` and `reconstructed` must each
/// point to `count * height * width` floats (the outputs writable).
#[no_mangle]
pub unsafe extern "C" fn fs_model_translate(
    model: *const FsModel,
    direction: u32,
    images: *const f32,
    count: usize,
    height: usize,
    width: usize,
    translated: *mut f32,
    reconstructed: *mut f32,
) -> FsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(images, "images")?;
        non_null(translated, "translated")?;
        non_null(reconstructed, "reconstructed")?;
        let forward = match direction {
            d if d == FsDirection::Forward as u32 => true,
            d if d == FsDirection::Backward as u32 => false,
            d => return Err(fail(FsStatus::InvalidArgument, format!("unknown direction {d}"))),
        };
        let model = &*model;
        let Some(f) = &model.f else {
            return Err(fail(FsStatus::WrongModelKind, "translation needs a CycleGAN checkpoint"));
        };
        let n = pixels(height, width)?
            .checked_mul(count)
            .filter(|&n| n > 0)
            .ok_or_else(|| fail(FsStatus::InvalidArgument, "count must be >= 1"))?;
        let input = Tensor4::from_vec([count, 1, height, width], slice::from_raw_parts(images, n).to_vec()).map_err(from_error)?;
        let (t, r) = translate_cycle(&model.g, f, &input, forward).map_err(from_error)?;
        if t.len() != n || r.len() != n {
            return Err(fail(FsStatus::InvalidArgument, format!("model output has {} values, expected {n}", t.len())));
        }
        slice::from_raw_parts_mut(translated, n).copy_from_slice(t.data());
        slice::from_raw_parts_mut(reconstructed, n).copy_from_slice(r.data());
        Ok(())
    })
}

/// Generate `count` images from latent codes with a DCGAN. `latent` holds
/// `count * latent_dim` floats; `out` receives `count * out_len_per_image` floats,
/// where the per-image length must equal the generator's output size squared.
///
/// # Safety
/// `model` must be live; `latent` and `out` must point to the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fs_model_generate(
    model: *const FsModel,
    latent: *const f32,
    count: usize,
    latent_dim: usize,
    out: *mut f32,
    out_len_per_image: usize,
) -> FsStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(latent, "latent")?;
        non_null(out, "out")?;
        let model = &*model;
        if model.kind != FsModelKind::Dcgan {
            return Err(fail(FsStatus::WrongModelKind, "generation needs a DCGAN checkpoint"));
        }
        let z_len = count
            .checked_mul(latent_dim)
            .filter(|&n| n > 0)
            .ok_or_else(|| fail(FsStatus::InvalidArgument, "count and latent_dim must be >= 1"))?;
        let z = Tensor4::from_vec([count, latent_dim, 1, 1], slice::from_raw_parts(latent, z_len).to_vec()).map_err(from_error)?;
        let images = model.g.infer(&z).map_err(from_error)?;
        if images.sample_len() != out_len_per_image {
            return Err(fail(
                FsStatus::InvalidArgument,
                format!("each image has {} values, caller expects {out_len_per_image}", images.sample_len()),
            ));
        }
        slice::from_raw_parts_mut(out, images.len()).copy_from_slice(images.data());
        Ok(())
    })
}
