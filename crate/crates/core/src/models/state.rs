use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{NetworkSpec, ParamRole};
use crate::error::{Error, Result};
use crate::nncore::ops::{self, NormCache};
use crate::nncore::{ActivationKind, LayerSpec, Real, Tensor4};

pub const INIT_STD: f64 = 0.02;

/// A network's layer table together with its learnable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState<T> {
    pub spec: NetworkSpec,
    pub names: Vec<String>,
    pub params: Vec<Tensor4<T>>,
    pub init_seed: u64,
}

/// How stochastic layers behave during a forward pass.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut dyn RngCore),
}

enum Cache<T> {
    Input(Tensor4<T>),
    Norm(NormCache<T>),
    Output(Tensor4<T>),
    Mask(Option<Tensor4<T>>),
    Shape([usize; 4]),
    Scale,
    Residual(Vec<Entry<T>>),
}

struct Entry<T> {
    layer: LayerSpec,
    param_start: usize,
    cache: Cache<T>,
}

/// Activations recorded by [`NetworkState::forward_train`] for one backward pass.
pub struct Tape<T> {
    entries: Vec<Entry<T>>,
    input_shape: [usize; 4],
}

impl<T: Real> Tape<T> {
    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    /// Which side of the kink every ReLU / LeakyReLU unit sits on.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        collect_pattern(&self.entries, &mut out);
        out
    }
}

fn collect_pattern<T: Real>(entries: &[Entry<T>], out: &mut Vec<bool>) {
    for e in entries {
        match (&e.layer, &e.cache) {
            (LayerSpec::Activation(ActivationKind::Relu), Cache::Output(y)) => {
                out.extend(y.data().iter().map(|&v| v > T::zero()))
            }
            (LayerSpec::Activation(ActivationKind::LeakyRelu { .. }), Cache::Output(y)) => {
                out.extend(y.data().iter().map(|&v| v >= T::zero()))
            }
            (_, Cache::Residual(inner)) => collect_pattern(inner, out),
            _ => {}
        }
    }
}

/// Gaussian(0, 0.02) weights, zero biases, unit gamma, zero beta; deterministic per seed.
pub fn init_parameters<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<NetworkState<T>> {
    let table = spec.param_table()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut names = Vec::with_capacity(table.len());
    let mut params = Vec::with_capacity(table.len());
    for info in table {
        let t = match info.role {
            ParamRole::Weight => Tensor4::from_fn(info.shape, |_| T::lit(normal.sample(&mut rng))),
            ParamRole::Bias | ParamRole::Beta => Tensor4::zeros(info.shape),
            ParamRole::Gamma => Tensor4::filled(info.shape, T::one()),
        };
        names.push(info.name);
        params.push(t);
    }
    Ok(NetworkState {
        spec: spec.clone(),
        names,
        params,
        init_seed: seed,
    })
}

impl<T: Real> NetworkState<T> {
    /// Assemble a state from explicit tensors, checking them against the layer table.
    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor4<T>>, init_seed: u64) -> Result<Self> {
        let table = spec.param_table()?;
        if table.len() != params.len() {
            return Err(Error::Dimension {
                axis: "parameters",
                expected: table.len(),
                actual: params.len(),
            });
        }
        for (info, p) in table.iter().zip(&params) {
            if info.shape != p.shape() {
                return Err(Error::Parameter(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    info.name,
                    p.shape(),
                    info.shape
                )));
            }
        }
        Ok(Self {
            spec,
            names: table.into_iter().map(|p| p.name).collect(),
            params,
            init_seed,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn zeros_like_params(&self) -> Vec<Tensor4<T>> {
        self.params.iter().map(|p| Tensor4::zeros(p.shape())).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn cast<U: Real>(&self) -> NetworkState<U> {
        NetworkState {
            spec: self.spec.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            init_seed: self.init_seed,
        }
    }

    /// Input channel and spatial size are validated per layer, so the same
    /// state accepts any resolution its layer table supports.
    pub fn forward(&self, x: &Tensor4<T>, mut mode: Mode<'_>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut cursor = 0;
        run(&self.spec.layers, &self.params, &mut cursor, x.clone(), &mut mode, None)
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.forward(x, Mode::Inference)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_train(&self, x: &Tensor4<T>, rng: &mut dyn RngCore) -> Result<(Tensor4<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut mode = Mode::Training(rng);
        let mut entries = Vec::new();
        let mut cursor = 0;
        let y = run(&self.spec.layers, &self.params, &mut cursor, x.clone(), &mut mode, Some(&mut entries))?;
        Ok((
            y,
            Tape {
                entries,
                input_shape: x.shape(),
            },
        ))
    }

    /// Backpropagate `grad_out`, adding parameter gradients into `grads`.
    /// Returns the gradient with respect to the network input.
    pub fn backward(&self, tape: Tape<T>, grad_out: &Tensor4<T>, grads: &mut [Tensor4<T>]) -> Result<Tensor4<T>> {
        if grads.len() != self.params.len() {
            return Err(Error::Dimension {
                axis: "parameters",
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        back(tape.entries, &self.params, grad_out.clone(), grads)
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.spec.input_shape[0] {
            return Err(Error::Dimension {
                axis: "channels",
                expected: self.spec.input_shape[0],
                actual: x.channels(),
            });
        }
        Ok(())
    }
}

fn vec_of<T: Real>(t: &Tensor4<T>) -> &[T] {
    t.data()
}

fn add_into<T: Real>(dst: &mut Tensor4<T>, src: &[T]) {
    for (a, &b) in dst.data_mut().iter_mut().zip(src) {
        *a += b;
    }
}

fn run<T: Real>(
    layers: &[LayerSpec],
    params: &[Tensor4<T>],
    cursor: &mut usize,
    mut x: Tensor4<T>,
    mode: &mut Mode<'_>,
    mut tape: Option<&mut Vec<Entry<T>>>,
) -> Result<Tensor4<T>> {
    for layer in layers {
        let start = *cursor;
        let recording = tape.is_some();
        let (y, cache) = match layer {
            LayerSpec::Conv(g) => {
                *cursor += 1 + g.bias as usize;
                let zero;
                let bias = if g.bias {
                    vec_of(&params[start + 1])
                } else {
                    zero = vec![T::zero(); g.out_channels];
                    &zero
                };
                let y = ops::conv2d(&x, &params[start], bias, g.stride, g.padding)?;
                (y, recording.then(|| Cache::Input(x)))
            }
            LayerSpec::ConvTranspose(g) => {
                *cursor += 1 + g.bias as usize;
                let zero;
                let bias = if g.bias {
                    vec_of(&params[start + 1])
                } else {
                    zero = vec![T::zero(); g.out_channels];
                    &zero
                };
                let y = ops::conv_transpose2d(&x, &params[start], bias, g.stride, g.padding, g.output_padding)?;
                (y, recording.then(|| Cache::Input(x)))
            }
            LayerSpec::InstanceNorm { eps } => {
                *cursor += 2;
                let (y, cache) =
                    ops::instance_norm_forward(&x, vec_of(&params[start]), vec_of(&params[start + 1]), T::lit(*eps))?;
                (y, recording.then_some(Cache::Norm(cache)))
            }
            LayerSpec::Activation(kind) => {
                let y = ops::apply_activation(&x, *kind);
                let cache = recording.then(|| Cache::Output(y.clone()));
                (y, cache)
            }
            LayerSpec::Dropout { rate } => {
                let (y, mask) = match mode {
                    Mode::Inference => (x, None),
                    Mode::Training(rng) => ops::dropout_forward(&x, *rate, *rng, true)?,
                };
                (y, recording.then_some(Cache::Mask(mask)))
            }
            LayerSpec::Dense { .. } => {
                *cursor += 2;
                let y = ops::dense(&x, &params[start], vec_of(&params[start + 1]))?;
                (y, recording.then(|| Cache::Input(x)))
            }
            LayerSpec::Flatten => {
                let shape = x.shape();
                let y = x.reshape([shape[0], shape[1] * shape[2] * shape[3], 1, 1])?;
                (y, recording.then_some(Cache::Shape(shape)))
            }
            LayerSpec::Reshape { channels, height, width } => {
                let shape = x.shape();
                let y = x.reshape([shape[0], *channels, *height, *width])?;
                (y, recording.then_some(Cache::Shape(shape)))
            }
            LayerSpec::Rescale { scale, offset } => {
                let (s, o) = (T::lit(*scale), T::lit(*offset));
                (x.map(|v| v * s + o), recording.then_some(Cache::Scale))
            }
            LayerSpec::ResidualBlock { body } => {
                let mut inner = Vec::new();
                let mut fx = run(
                    body,
                    params,
                    cursor,
                    x.clone(),
                    mode,
                    if recording { Some(&mut inner) } else { None },
                )?;
                fx.add_assign(&x)?;
                (fx, recording.then_some(Cache::Residual(inner)))
            }
        };
        if let (Some(t), Some(cache)) = (tape.as_deref_mut(), cache) {
            t.push(Entry {
                layer: layer.clone(),
                param_start: start,
                cache,
            });
        }
        x = y;
    }
    Ok(x)
}

fn back<T: Real>(
    entries: Vec<Entry<T>>,
    params: &[Tensor4<T>],
    mut grad: Tensor4<T>,
    grads: &mut [Tensor4<T>],
) -> Result<Tensor4<T>> {
    for entry in entries.into_iter().rev() {
        let p = entry.param_start;
        grad = match (&entry.layer, entry.cache) {
            (LayerSpec::Conv(g), Cache::Input(x)) => {
                let r = ops::conv2d_backward(&x, &params[p], &grad, g.stride, g.padding)?;
                add_into(&mut grads[p], r.weight.data());
                if g.bias {
                    add_into(&mut grads[p + 1], &r.bias);
                }
                r.input
            }
            (LayerSpec::ConvTranspose(g), Cache::Input(x)) => {
                let r = ops::conv_transpose2d_backward(&x, &params[p], &grad, g.stride, g.padding)?;
                add_into(&mut grads[p], r.weight.data());
                if g.bias {
                    add_into(&mut grads[p + 1], &r.bias);
                }
                r.input
            }
            (LayerSpec::InstanceNorm { .. }, Cache::Norm(cache)) => {
                let r = ops::instance_norm_backward(&cache, vec_of(&params[p]), &grad)?;
                add_into(&mut grads[p], &r.gamma);
                add_into(&mut grads[p + 1], &r.beta);
                r.input
            }
            (LayerSpec::Activation(kind), Cache::Output(y)) => ops::activation_backward(&y, &grad, *kind)?,
            (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => ops::dropout_backward(mask.as_ref(), &grad)?,
            (LayerSpec::Dense { .. }, Cache::Input(x)) => {
                let r = ops::dense_backward(&x, &params[p], &grad)?;
                add_into(&mut grads[p], r.weight.data());
                add_into(&mut grads[p + 1], &r.bias);
                r.input
            }
            (LayerSpec::Flatten | LayerSpec::Reshape { .. }, Cache::Shape(shape)) => grad.reshape(shape)?,
            (LayerSpec::Rescale { scale, .. }, Cache::Scale) => {
                let s = T::lit(*scale);
                grad.map(|g| g * s)
            }
            (LayerSpec::ResidualBlock { .. }, Cache::Residual(inner)) => {
                let mut through_body = back(inner, params, grad.clone(), grads)?;
                through_body.add_assign(&grad)?;
                through_body
            }
            (layer, _) => {
                return Err(Error::Parameter(format!(
                    "tape entry does not match layer `{}`",
                    layer.name()
                )))
            }
        };
    }
    Ok(grad)
}
