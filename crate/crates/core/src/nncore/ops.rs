//! Forward and backward kernels for every layer type the networks use.
//!
//! Forward functions are pure. Each `*_backward` takes whatever the forward pass
//! needs to have kept around (input, output or normalized activations) and the
//! gradient of a scalar objective with respect to the forward output.
//!
//! Batch samples are processed independently (in parallel when the rayon pool has
//! more than one thread) and per-sample parameter gradients are reduced in sample
//! order, so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;

use super::layer::{check_dropout_rate, conv_out_len, conv_transpose_out_len, ActivationKind};
use super::tensor::{matmul, MatRef, Real, Tensor4};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Window {
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
}

/// Unfold `img` (c, h, w) into a `(c*kh*kw) x (oh*ow)` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, win: Window, oh: usize, ow: usize, cols: &mut [T]) {
    let l = oh * ow;
    for ci in 0..c {
        let plane = &img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..win.kh {
            for kj in 0..win.kw {
                let row = (ci * win.kh + ki) * win.kw + kj;
                let dst = &mut cols[row * l..(row + 1) * l];
                for oy in 0..oh {
                    let iy = (oy * win.sh + ki) as isize - win.ph as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * win.sw + kj) as isize - win.pw as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add the columns back into `img` (c, h, w).
#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, win: Window, oh: usize, ow: usize, img: &mut [T]) {
    let l = oh * ow;
    img.fill(T::zero());
    for ci in 0..c {
        let plane = &mut img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..win.kh {
            for kj in 0..win.kw {
                let row = (ci * win.kh + ki) * win.kw + kj;
                let src = &cols[row * l..(row + 1) * l];
                for oy in 0..oh {
                    let iy = (oy * win.sh + ki) as isize - win.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * win.sw + kj) as isize - win.pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_axis(axis: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            axis,
            expected,
            actual,
        })
    }
}

fn check_bias<T: Real>(bias: &[T], channels: usize) -> Result<()> {
    check_axis("bias", channels, bias.len())
}

/// Sum equally sized per-sample buffers in sample order.
fn reduce_in_order<T: Real>(parts: impl IntoIterator<Item = Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for part in parts {
        for (a, b) in acc.iter_mut().zip(part) {
            *a += b;
        }
    }
    acc
}

fn channel_sums<T: Real>(t: &Tensor4<T>) -> Vec<T> {
    let [n, c, _, _] = t.shape();
    let plane = t.plane_len();
    let mut sums = vec![T::zero(); c];
    for i in 0..n {
        let s = t.sample(i);
        for (ci, sum) in sums.iter_mut().enumerate() {
            *sum += s[ci * plane..(ci + 1) * plane]
                .iter()
                .fold(T::zero(), |a, &v| a + v);
        }
    }
    sums
}

pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weight: Tensor4<T>,
    pub bias: Vec<T>,
}

/// Cross-correlation with zero padding. `weights` is `(c_out, c_in, kh, kw)`.
pub fn conv2d<T: Real>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor4<T>> {
    let [n, c_in, h, w] = x.shape();
    let [c_out, wc_in, kh, kw] = weights.shape();
    check_axis("channels", wc_in, c_in)?;
    check_bias(bias, c_out)?;
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Parameter("stride must be >= 1".into()));
    }
    let oh = conv_out_len(h, kh, stride.0, padding.0, "height")?;
    let ow = conv_out_len(w, kw, stride.1, padding.1, "width")?;
    let win = Window { kh, kw, sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1 };
    let k = c_in * kh * kw;
    let l = oh * ow;

    let outs: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![T::zero(); c_out * l];
            for (co, row) in out.chunks_mut(l).enumerate() {
                row.fill(bias[co]);
            }
            let w_mat = MatRef::new(weights.data(), c_out, k);
            if kh == 1 && kw == 1 && win.sh == 1 && win.sw == 1 && win.ph == 0 && win.pw == 0 {
                matmul(w_mat, MatRef::new(x.sample(i), k, l), T::one(), &mut out);
            } else {
                let mut cols = vec![T::zero(); k * l];
                im2col(x.sample(i), c_in, h, w, win, oh, ow, &mut cols);
                matmul(w_mat, MatRef::new(&cols, k, l), T::one(), &mut out);
            }
            out
        })
        .collect();
    Tensor4::from_vec([n, c_out, oh, ow], outs.concat())
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<ConvGrads<T>> {
    let [n, c_in, h, w] = x.shape();
    let [c_out, _, kh, kw] = weights.shape();
    let [gn, gc, oh, ow] = grad_out.shape();
    check_axis("batch", n, gn)?;
    check_axis("channels", c_out, gc)?;
    check_axis("height", conv_out_len(h, kh, stride.0, padding.0, "height")?, oh)?;
    check_axis("width", conv_out_len(w, kw, stride.1, padding.1, "width")?, ow)?;
    let win = Window { kh, kw, sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1 };
    let k = c_in * kh * kw;
    let l = oh * ow;

    let parts: Vec<(Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cols = vec![T::zero(); k * l];
            im2col(x.sample(i), c_in, h, w, win, oh, ow, &mut cols);
            let dy = MatRef::new(grad_out.sample(i), c_out, l);
            let mut dw = vec![T::zero(); c_out * k];
            matmul(dy, MatRef::new(&cols, k, l).t(), T::zero(), &mut dw);
            // reuse the column buffer for the input gradient
            matmul(MatRef::new(weights.data(), c_out, k).t(), dy, T::zero(), &mut cols);
            let mut dx = vec![T::zero(); c_in * h * w];
            col2im(&cols, c_in, h, w, win, oh, ow, &mut dx);
            (dx, dw)
        })
        .collect();

    let (dxs, dws): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok(ConvGrads {
        input: Tensor4::from_vec(x.shape(), dxs.concat())?,
        weight: Tensor4::from_vec(weights.shape(), reduce_in_order(dws, c_out * k))?,
        bias: channel_sums(grad_out),
    })
}

/// Transposed convolution. `weights` is `(c_in, c_out, kh, kw)`; output size is
/// `(h - 1) * s - 2p + k + output_padding`.
pub fn conv_transpose2d<T: Real>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: &[T],
    stride: (usize, usize),
    padding: (usize, usize),
    output_padding: (usize, usize),
) -> Result<Tensor4<T>> {
    let [n, c_in, h, w] = x.shape();
    let [wc_in, c_out, kh, kw] = weights.shape();
    check_axis("channels", wc_in, c_in)?;
    check_bias(bias, c_out)?;
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Parameter("stride must be >= 1".into()));
    }
    if output_padding.0 >= stride.0 || output_padding.1 >= stride.1 {
        return Err(Error::Parameter("output padding must be smaller than the stride".into()));
    }
    let oh = conv_transpose_out_len(h, kh, stride.0, padding.0, output_padding.0, "height")?;
    let ow = conv_transpose_out_len(w, kw, stride.1, padding.1, output_padding.1, "width")?;
    let win = Window { kh, kw, sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1 };
    let k = c_out * kh * kw;
    let l = h * w;

    let outs: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cols = vec![T::zero(); k * l];
            matmul(
                MatRef::new(weights.data(), c_in, k).t(),
                MatRef::new(x.sample(i), c_in, l),
                T::zero(),
                &mut cols,
            );
            let mut out = vec![T::zero(); c_out * oh * ow];
            col2im(&cols, c_out, oh, ow, win, h, w, &mut out);
            for (co, plane) in out.chunks_mut(oh * ow).enumerate() {
                for v in plane {
                    *v += bias[co];
                }
            }
            out
        })
        .collect();
    Tensor4::from_vec([n, c_out, oh, ow], outs.concat())
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<ConvGrads<T>> {
    let [n, c_in, h, w] = x.shape();
    let [_, c_out, kh, kw] = weights.shape();
    let [gn, gc, oh, ow] = grad_out.shape();
    check_axis("batch", n, gn)?;
    check_axis("channels", c_out, gc)?;
    let win = Window { kh, kw, sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1 };
    check_axis("height", h, conv_out_len(oh, kh, stride.0, padding.0, "height")?)?;
    check_axis("width", w, conv_out_len(ow, kw, stride.1, padding.1, "width")?)?;
    let k = c_out * kh * kw;
    let l = h * w;

    let parts: Vec<(Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cols = vec![T::zero(); k * l];
            im2col(grad_out.sample(i), c_out, oh, ow, win, h, w, &mut cols);
            let cols_mat = MatRef::new(&cols, k, l);
            let mut dx = vec![T::zero(); c_in * l];
            matmul(MatRef::new(weights.data(), c_in, k), cols_mat, T::zero(), &mut dx);
            let mut dw = vec![T::zero(); c_in * k];
            matmul(MatRef::new(x.sample(i), c_in, l), cols_mat.t(), T::zero(), &mut dw);
            (dx, dw)
        })
        .collect();

    let (dxs, dws): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    Ok(ConvGrads {
        input: Tensor4::from_vec(x.shape(), dxs.concat())?,
        weight: Tensor4::from_vec(weights.shape(), reduce_in_order(dws, c_in * k))?,
        bias: channel_sums(grad_out),
    })
}

/// Values kept by [`instance_norm_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    pub normalized: Tensor4<T>,
    pub inv_std: Vec<T>,
}

pub fn instance_norm<T: Real>(x: &Tensor4<T>, gamma: &[T], beta: &[T], eps: T) -> Result<Tensor4<T>> {
    instance_norm_forward(x, gamma, beta, eps).map(|(y, _)| y)
}

/// Per (sample, channel) plane: `(x - mean) / sqrt(var + eps) * gamma + beta`, population variance.
pub fn instance_norm_forward<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor4<T>, NormCache<T>)> {
    let c = x.channels();
    check_axis("gamma", c, gamma.len())?;
    check_axis("beta", c, beta.len())?;
    if !(eps > T::zero()) {
        return Err(Error::Parameter("instance norm eps must be > 0".into()));
    }
    let plane = x.plane_len();
    let count = T::from_usize(plane).unwrap();
    let mut normalized = x.clone();
    let mut y = x.clone();
    let mut inv_std = Vec::with_capacity(x.batch() * c);
    for (p, (xh, out)) in normalized
        .data_mut()
        .chunks_mut(plane)
        .zip(y.data_mut().chunks_mut(plane))
        .enumerate()
    {
        let ci = p % c;
        let mean = xh.iter().fold(T::zero(), |a, &v| a + v) / count;
        let var = xh.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / count;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (v, o) in xh.iter_mut().zip(out.iter_mut()) {
            *v = (*v - mean) * is;
            *o = *v * gamma[ci] + beta[ci];
        }
    }
    Ok((y, NormCache { normalized, inv_std }))
}

pub struct NormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn instance_norm_backward<T: Real>(
    cache: &NormCache<T>,
    gamma: &[T],
    grad_out: &Tensor4<T>,
) -> Result<NormGrads<T>> {
    cache.normalized.check_same_shape(grad_out)?;
    let c = grad_out.channels();
    let plane = grad_out.plane_len();
    let count = T::from_usize(plane).unwrap();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = grad_out.clone();
    for (p, (dxp, xh)) in dx
        .data_mut()
        .chunks_mut(plane)
        .zip(cache.normalized.data().chunks(plane))
        .enumerate()
    {
        let ci = p % c;
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for (&dy, &xv) in dxp.iter().zip(xh) {
            sum_dy += dy;
            sum_dy_xh += dy * xv;
        }
        dgamma[ci] += sum_dy_xh;
        dbeta[ci] += sum_dy;
        let scale = gamma[ci] * cache.inv_std[p] / count;
        for (d, &xv) in dxp.iter_mut().zip(xh) {
            *d = scale * (count * *d - sum_dy - xv * sum_dy_xh);
        }
    }
    Ok(NormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}

fn activate<T: Real>(v: T, kind: ActivationKind) -> T {
    match kind {
        ActivationKind::Relu => v.max(T::zero()),
        ActivationKind::LeakyRelu { alpha } => {
            if v >= T::zero() {
                v
            } else {
                T::lit(alpha) * v
            }
        }
        ActivationKind::Tanh => v.tanh(),
        ActivationKind::Sigmoid => {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        }
        ActivationKind::None => v,
    }
}

pub fn apply_activation<T: Real>(x: &Tensor4<T>, kind: ActivationKind) -> Tensor4<T> {
    x.map(|v| activate(v, kind))
}

/// Gradient through an activation, expressed in terms of its forward output.
pub fn activation_backward<T: Real>(
    output: &Tensor4<T>,
    grad_out: &Tensor4<T>,
    kind: ActivationKind,
) -> Result<Tensor4<T>> {
    output.zip_map(grad_out, |y, g| {
        let d = match kind {
            ActivationKind::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::LeakyRelu { alpha } => {
                if y >= T::zero() {
                    T::one()
                } else {
                    T::lit(alpha)
                }
            }
            ActivationKind::Tanh => T::one() - y * y,
            ActivationKind::Sigmoid => y * (T::one() - y),
            ActivationKind::None => T::one(),
        };
        d * g
    })
}

/// Inverted dropout. Returns the output and the per-element multiplier (0 or 1/(1-rate)).
pub fn dropout_forward<T: Real, R: Rng + ?Sized>(
    x: &Tensor4<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor4<T>, Option<Tensor4<T>>)> {
    check_dropout_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask = x.map(|_| {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    });
    let y = x.zip_map(&mask, |a, m| a * m)?;
    Ok((y, Some(mask)))
}

pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor4<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<Tensor4<T>> {
    dropout_forward(x, rate, rng, training).map(|(y, _)| y)
}

pub fn dropout_backward<T: Real>(mask: Option<&Tensor4<T>>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    match mask {
        Some(m) => m.zip_map(grad_out, |a, b| a * b),
        None => Ok(grad_out.clone()),
    }
}

/// Fully connected layer on `(n, in, 1, 1)` input; `weights` is `(out, in, 1, 1)`.
pub fn dense<T: Real>(x: &Tensor4<T>, weights: &Tensor4<T>, bias: &[T]) -> Result<Tensor4<T>> {
    let [n, f_in, h, w] = x.shape();
    check_axis("height", 1, h)?;
    check_axis("width", 1, w)?;
    let [f_out, wf_in, _, _] = weights.shape();
    check_axis("channels", wf_in, f_in)?;
    check_bias(bias, f_out)?;
    let mut out = Vec::with_capacity(n * f_out);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    matmul(
        MatRef::new(x.data(), n, f_in),
        MatRef::new(weights.data(), f_out, f_in).t(),
        T::one(),
        &mut out,
    );
    Tensor4::from_vec([n, f_out, 1, 1], out)
}

pub fn dense_backward<T: Real>(
    x: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let [n, f_in, _, _] = x.shape();
    let [f_out, _, _, _] = weights.shape();
    check_axis("batch", n, grad_out.batch())?;
    check_axis("channels", f_out, grad_out.channels())?;
    let dy = MatRef::new(grad_out.data(), n, f_out);
    let mut dx = vec![T::zero(); n * f_in];
    matmul(dy, MatRef::new(weights.data(), f_out, f_in), T::zero(), &mut dx);
    let mut dw = vec![T::zero(); f_out * f_in];
    matmul(dy.t(), MatRef::new(x.data(), n, f_in), T::zero(), &mut dw);
    Ok(ConvGrads {
        input: Tensor4::from_vec(x.shape(), dx)?,
        weight: Tensor4::from_vec(weights.shape(), dw)?,
        bias: channel_sums(grad_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: [usize; 4], data: Vec<f64>) -> Tensor4<f64> {
        Tensor4::from_vec(shape, data).unwrap()
    }

    #[test]
    fn conv_shape_formula_256() {
        let x = Tensor4::<f32>::zeros([1, 1, 256, 256]);
        let w = Tensor4::<f32>::zeros([64, 1, 4, 4]);
        let y = conv2d(&x, &w, &[0.0; 64], (2, 2), (1, 1)).unwrap();
        assert_eq!(y.shape(), [1, 64, 128, 128]);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor4::<f64>::filled([1, 1, 3, 3], 1.0);
        let w = t([1, 1, 1, 1], vec![1.0]);
        assert_eq!(conv2d(&x, &w, &[0.0], (1, 1), (0, 0)).unwrap(), x);
    }

    #[test]
    fn conv_window_sum() {
        let x = Tensor4::<f64>::filled([1, 1, 4, 4], 1.0);
        let w = Tensor4::<f64>::filled([1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &w, &[0.0], (2, 2), (0, 0)).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn conv_channel_mismatch_names_axis() {
        let x = Tensor4::<f64>::zeros([1, 2, 4, 4]);
        let w = Tensor4::<f64>::zeros([1, 3, 2, 2]);
        match conv2d(&x, &w, &[0.0], (1, 1), (0, 0)) {
            Err(Error::Dimension { axis, expected, actual }) => {
                assert_eq!((axis, expected, actual), ("channels", 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conv_transpose_shape_with_output_padding() {
        let x = Tensor4::<f32>::zeros([1, 128, 64, 64]);
        let w = Tensor4::<f32>::zeros([128, 64, 3, 3]);
        let y = conv_transpose2d(&x, &w, &[0.0; 64], (2, 2), (1, 1), (1, 1)).unwrap();
        assert_eq!(y.shape(), [1, 64, 128, 128]);
    }

    #[test]
    fn conv_transpose_identity_kernel() {
        let x = t([1, 1, 2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]);
        let w = t([1, 1, 1, 1], vec![1.0]);
        assert_eq!(conv_transpose2d(&x, &w, &[0.0], (1, 1), (0, 0), (0, 0)).unwrap(), x);
    }

    /// Scatter-add reference: each input pixel stamps its weighted kernel into the output.
    fn scatter_add(x: &Tensor4<f64>, w: &Tensor4<f64>, s: usize, p: usize, oh: usize) -> Tensor4<f64> {
        let [_, c_in, h, wd] = x.shape();
        let [_, c_out, k, _] = w.shape();
        let mut full = vec![0.0; c_out * (oh + 2 * p + k) * (oh + 2 * p + k)];
        let fw = oh + 2 * p + k;
        for ci in 0..c_in {
            for i in 0..h {
                for j in 0..wd {
                    for co in 0..c_out {
                        for a in 0..k {
                            for b in 0..k {
                                full[(co * fw + i * s + a) * fw + j * s + b] +=
                                    x.get([0, ci, i, j]) * w.get([ci, co, a, b]);
                            }
                        }
                    }
                }
            }
        }
        Tensor4::from_fn([1, c_out, oh, oh], |[_, co, y, xx]| full[(co * fw + y + p) * fw + xx + p])
    }

    #[test]
    fn conv_transpose_matches_scatter_add_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor4::from_fn([1, 2, 3, 3], |_| rng.random::<f64>() - 0.5);
        let w = Tensor4::from_fn([2, 3, 3, 3], |_| rng.random::<f64>() - 0.5);
        for (s, p, op) in [(1, 0, 0), (2, 1, 1), (2, 0, 0), (2, 1, 0)] {
            let y = conv_transpose2d(&x, &w, &[0.0; 3], (s, s), (p, p), (op, op)).unwrap();
            let oh = (3 - 1) * s + 3 + op - 2 * p;
            assert_eq!(y.height(), oh);
            let want = scatter_add(&x, &w, s, p, oh);
            for (a, b) in y.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "s={s} p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn instance_norm_constant_plane_is_zero() {
        let x = Tensor4::<f64>::filled([1, 1, 3, 3], 7.0);
        let y = instance_norm(&x, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_norm_zero_gamma_gives_beta() {
        let x = t([1, 2, 1, 2], vec![1.0, 5.0, -3.0, 2.0]);
        let y = instance_norm(&x, &[0.0, 0.0], &[0.25, -1.5], 1e-5).unwrap();
        assert_eq!(y.data(), &[0.25, 0.25, -1.5, -1.5]);
    }

    #[test]
    fn instance_norm_unit_statistics() {
        let x = t([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let y = instance_norm(&x, &[1.0], &[0.0], 1e-12).unwrap();
        let mean = y.mean();
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn activations_match_definitions() {
        let x = t([1, 1, 1, 3], vec![-2.0, 0.0, 3.0]);
        assert_eq!(apply_activation(&x, ActivationKind::Relu).data(), &[0.0, 0.0, 3.0]);
        let l = apply_activation(&t([1, 1, 1, 1], vec![-1.0]), ActivationKind::LeakyRelu { alpha: 0.2 });
        assert!((l.data()[0] + 0.2).abs() < 1e-15);
        let s = apply_activation(&t([1, 1, 1, 1], vec![0.0]), ActivationKind::Sigmoid);
        assert_eq!(s.data()[0], 0.5);
        let big = apply_activation(&t([1, 1, 1, 2], vec![-40.0, 40.0]), ActivationKind::Tanh);
        assert!(big.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dropout_inference_and_zero_rate_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor4::from_fn([1, 1, 4, 4], |[_, _, h, w]| (h * 4 + w) as f64);
        assert_eq!(dropout(&x, 0.4, &mut rng, false).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor4::<f64>::zeros([1, 1, 1, 1]);
        assert!(matches!(dropout(&x, 1.0, &mut rng, true), Err(Error::Parameter(_))));
    }

    #[test]
    fn dropout_rate_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor4::<f32>::filled([1, 1, 1000, 1000], 1.0);
        let y = dropout(&x, 0.4, &mut rng, true).unwrap();
        let zeroed = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeroed - 0.4).abs() < 0.005, "zeroed fraction {zeroed}");
        let kept = y.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.6).abs() < 1e-6);
    }

    #[test]
    fn dense_matches_hand_product() {
        let x = t([2, 3, 1, 1], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let w = t([2, 3, 1, 1], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]);
        let y = dense(&x, &w, &[0.1, 0.0]).unwrap();
        let want = [1.0 - 3.0 + 0.1, 3.0, -1.0 - 1.0 + 0.1, 0.0];
        for (a, b) in y.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
