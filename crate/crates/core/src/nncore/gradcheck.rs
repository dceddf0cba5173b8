//! Central-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layer::ActivationKind;
use super::ops;
use super::tensor::{Real, Tensor4};
use crate::error::{Error, Result};

/// An operation with a hand-written backward pass.
pub trait Differentiable<T: Real> {
    /// Names of the inputs, in the order `forward` expects them.
    fn input_names(&self) -> Vec<String>;

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>>;

    /// Gradients with respect to every input, given the output gradient.
    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>>;
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Objective value plus the on/off pattern of its piecewise-linear units.
pub struct Evaluation<T> {
    pub value: T,
    pub pattern: Vec<bool>,
}

impl<T> From<T> for Evaluation<T> {
    fn from(value: T) -> Self {
        Self {
            value,
            pattern: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    /// Worst relative error over coordinates whose difference quotient stayed on one linear piece.
    pub max_relative_error: f64,
    pub per_param: Vec<(String, f64)>,
    pub checked: usize,
    /// Coordinates where the +/- eps evaluations switched a ReLU-type unit.
    pub kink_crossings: usize,
}

/// Compare `gradient` of a scalar objective against central differences, one
/// coordinate at a time. Returns the worst relative error.
pub fn check_scalar_gradient<T: Real>(
    names: &[String],
    params: &mut [Tensor4<T>],
    eps: f64,
    mut objective: impl FnMut(&[Tensor4<T>]) -> Result<T>,
    gradient: &[Tensor4<T>],
) -> Result<f64> {
    let report = check_gradient(names, params, eps, |p| objective(p).map(Evaluation::from), gradient)?;
    Ok(report.max_relative_error)
}

/// Central-difference check that skips (and counts) coordinates whose
/// perturbation changes the objective's activation pattern.
pub fn check_gradient<T: Real>(
    names: &[String],
    params: &mut [Tensor4<T>],
    eps: f64,
    mut objective: impl FnMut(&[Tensor4<T>]) -> Result<Evaluation<T>>,
    gradient: &[Tensor4<T>],
) -> Result<GradCheckReport> {
    if names.len() != params.len() || gradient.len() != params.len() {
        return Err(Error::Parameter("names, params and gradients must align".into()));
    }
    for (g, name) in gradient.iter().zip(names) {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    let base = objective(params)?.pattern;
    let h = T::lit(eps);
    let mut report = GradCheckReport::default();
    for p in 0..params.len() {
        gradient[p].check_same_shape(&params[p])?;
        let mut worst = 0.0f64;
        for i in 0..params[p].len() {
            let orig = params[p].data()[i];
            params[p].data_mut()[i] = orig + h;
            let plus = objective(params)?;
            params[p].data_mut()[i] = orig - h;
            let minus = objective(params)?;
            params[p].data_mut()[i] = orig;
            let numeric = (plus.value - minus.value).to_f64().unwrap() / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::NonFiniteGradient { name: names[p].clone() });
            }
            if plus.pattern != base || minus.pattern != base {
                report.kink_crossings += 1;
                continue;
            }
            report.checked += 1;
            let analytic = gradient[p].data()[i].to_f64().unwrap();
            worst = worst.max(relative_error(analytic, numeric));
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report.per_param.push((names[p].clone(), worst));
    }
    Ok(report)
}

/// Scalarize `op`'s output with a fixed random projection and check every input's gradient.
pub fn grad_check<T: Real>(op: &dyn Differentiable<T>, inputs: &[Tensor4<T>], eps: f64) -> Result<f64> {
    let out = op.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let projection = out.map(|_| T::lit(rng.random::<f64>() * 2.0 - 1.0));
    let grads = op.backward(inputs, &projection)?;
    let names = op.input_names();
    let mut params = inputs.to_vec();
    check_scalar_gradient(
        &names,
        &mut params,
        eps,
        |p| {
            let y = op.forward(p)?;
            Ok(y.data()
                .iter()
                .zip(projection.data())
                .fold(T::zero(), |a, (&v, &r)| a + v * r))
        },
        &grads,
    )
}

fn as_vec<T: Real>(t: &Tensor4<T>) -> &[T] {
    t.data()
}

fn vec_tensor<T: Real>(v: Vec<T>) -> Result<Tensor4<T>> {
    let n = v.len();
    Tensor4::from_vec([n, 1, 1, 1], v)
}

/// `y = scale * x`.
pub struct ScaleOp(pub f64);

impl<T: Real> Differentiable<T> for ScaleOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        Ok(inputs[0].map(|v| v * T::lit(self.0)))
    }

    fn backward(&self, _inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        Ok(vec![grad_out.map(|g| g * T::lit(self.0))])
    }
}

/// Inputs: x, weights, bias (as a `(c_out,1,1,1)` tensor).
pub struct Conv2dOp {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl<T: Real> Differentiable<T> for Conv2dOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into(), "weight".into(), "bias".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        ops::conv2d(&inputs[0], &inputs[1], as_vec(&inputs[2]), self.stride, self.padding)
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let g = ops::conv2d_backward(&inputs[0], &inputs[1], grad_out, self.stride, self.padding)?;
        Ok(vec![g.input, g.weight, vec_tensor(g.bias)?])
    }
}

/// Inputs: x, weights `(c_in, c_out, kh, kw)`, bias.
pub struct ConvTranspose2dOp {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub output_padding: (usize, usize),
}

impl<T: Real> Differentiable<T> for ConvTranspose2dOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into(), "weight".into(), "bias".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        ops::conv_transpose2d(
            &inputs[0],
            &inputs[1],
            as_vec(&inputs[2]),
            self.stride,
            self.padding,
            self.output_padding,
        )
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let g = ops::conv_transpose2d_backward(&inputs[0], &inputs[1], grad_out, self.stride, self.padding)?;
        Ok(vec![g.input, g.weight, vec_tensor(g.bias)?])
    }
}

/// Inputs: x, gamma, beta.
pub struct InstanceNormOp {
    pub eps: f64,
}

impl<T: Real> Differentiable<T> for InstanceNormOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into(), "gamma".into(), "beta".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        ops::instance_norm(&inputs[0], as_vec(&inputs[1]), as_vec(&inputs[2]), T::lit(self.eps))
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let (_, cache) =
            ops::instance_norm_forward(&inputs[0], as_vec(&inputs[1]), as_vec(&inputs[2]), T::lit(self.eps))?;
        let g = ops::instance_norm_backward(&cache, as_vec(&inputs[1]), grad_out)?;
        Ok(vec![g.input, vec_tensor(g.gamma)?, vec_tensor(g.beta)?])
    }
}

pub struct ActivationOp(pub ActivationKind);

impl<T: Real> Differentiable<T> for ActivationOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        Ok(ops::apply_activation(&inputs[0], self.0))
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let y = ops::apply_activation(&inputs[0], self.0);
        Ok(vec![ops::activation_backward(&y, grad_out, self.0)?])
    }
}

/// Dropout with a mask drawn from a fixed seed, so repeated forwards agree.
pub struct DropoutOp {
    pub rate: f64,
    pub seed: u64,
}

impl<T: Real> Differentiable<T> for DropoutOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        ops::dropout(&inputs[0], self.rate, &mut rng, true)
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (_, mask) = ops::dropout_forward(&inputs[0], self.rate, &mut rng, true)?;
        Ok(vec![ops::dropout_backward(mask.as_ref(), grad_out)?])
    }
}

/// Inputs: x `(n, in, 1, 1)`, weights `(out, in, 1, 1)`, bias.
pub struct DenseOp;

impl<T: Real> Differentiable<T> for DenseOp {
    fn input_names(&self) -> Vec<String> {
        vec!["x".into(), "weight".into(), "bias".into()]
    }

    fn forward(&self, inputs: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        ops::dense(&inputs[0], &inputs[1], as_vec(&inputs[2]))
    }

    fn backward(&self, inputs: &[Tensor4<T>], grad_out: &Tensor4<T>) -> Result<Vec<Tensor4<T>>> {
        let g = ops::dense_backward(&inputs[0], &inputs[1], grad_out)?;
        Ok(vec![g.input, g.weight, vec_tensor(g.bias)?])
    }
}
