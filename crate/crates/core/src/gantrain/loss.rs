//! Training objectives. Each `*_grad` variant also returns the gradient of the
//! loss with respect to its (non-target) input.

use crate::error::Result;
use crate::nncore::{Real, Tensor4};

pub const BCE_CLAMP: f64 = 1e-7;

fn mean_of<T: Real>(t: &Tensor4<T>, f: impl Fn(T) -> T) -> T {
    let n = T::lit(t.len() as f64);
    t.data().iter().fold(T::zero(), |acc, &v| acc + f(v)) / n
}

/// Least-squares generator loss: `mean((s - 1)^2)`.
pub fn adversarial_loss_generator<T: Real>(scores: &Tensor4<T>) -> T {
    mean_of(scores, |s| (s - T::one()) * (s - T::one()))
}

pub fn adversarial_loss_generator_grad<T: Real>(scores: &Tensor4<T>) -> (T, Tensor4<T>) {
    let k = T::lit(2.0 / scores.len() as f64);
    (adversarial_loss_generator(scores), scores.map(|s| k * (s - T::one())))
}

/// Least-squares discriminator loss: `0.5 * [mean((real - 1)^2) + mean(fake^2)]`.
pub fn adversarial_loss_discriminator<T: Real>(real: &Tensor4<T>, fake: &Tensor4<T>) -> T {
    let half = T::lit(0.5);
    half * (mean_of(real, |s| (s - T::one()) * (s - T::one())) + mean_of(fake, |s| s * s))
}

/// Returns the loss and the gradients with respect to the real and fake scores.
pub fn adversarial_loss_discriminator_grad<T: Real>(
    real: &Tensor4<T>,
    fake: &Tensor4<T>,
) -> (T, Tensor4<T>, Tensor4<T>) {
    let kr = T::lit(1.0 / real.len() as f64);
    let kf = T::lit(1.0 / fake.len() as f64);
    (
        adversarial_loss_discriminator(real, fake),
        real.map(|s| kr * (s - T::one())),
        fake.map(|s| kf * s),
    )
}

/// Mean absolute difference (L1) between an image batch and its reconstruction.
pub fn cycle_loss<T: Real>(x: &Tensor4<T>, reconstructed: &Tensor4<T>) -> Result<T> {
    x.check_same_shape(reconstructed)?;
    let n = T::lit(x.len() as f64);
    Ok(x.data()
        .iter()
        .zip(reconstructed.data())
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs())
        / n)
}

/// Gradient is taken with respect to `reconstructed` (sign convention: d|r - x|/dr).
pub fn cycle_loss_grad<T: Real>(x: &Tensor4<T>, reconstructed: &Tensor4<T>) -> Result<(T, Tensor4<T>)> {
    let value = cycle_loss(x, reconstructed)?;
    let k = T::lit(1.0 / x.len() as f64);
    let grad = reconstructed.zip_map(x, |r, a| {
        if r > a {
            k
        } else if r < a {
            -k
        } else {
            T::zero()
        }
    })?;
    Ok((value, grad))
}

/// Binary cross-entropy against a constant label (1 = real, 0 = fake), with
/// predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss<T: Real>(predictions: &Tensor4<T>, label: f64) -> T {
    let (lo, hi) = (T::lit(BCE_CLAMP), T::lit(1.0 - BCE_CLAMP));
    let y = T::lit(label);
    mean_of(predictions, |p| {
        let p = p.max(lo).min(hi);
        -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
    })
}

/// Per-element labels.
pub fn bce_loss_labels<T: Real>(predictions: &Tensor4<T>, labels: &Tensor4<T>) -> Result<T> {
    predictions.check_same_shape(labels)?;
    let (lo, hi) = (T::lit(BCE_CLAMP), T::lit(1.0 - BCE_CLAMP));
    let n = T::lit(predictions.len() as f64);
    Ok(predictions
        .data()
        .iter()
        .zip(labels.data())
        .fold(T::zero(), |acc, (&p, &y)| {
            let p = p.max(lo).min(hi);
            acc - (y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        / n)
}

/// Gradient with respect to the predictions; zero where the clamp is active.
pub fn bce_loss_grad<T: Real>(predictions: &Tensor4<T>, label: f64) -> (T, Tensor4<T>) {
    let (lo, hi) = (T::lit(BCE_CLAMP), T::lit(1.0 - BCE_CLAMP));
    let y = T::lit(label);
    let k = T::lit(1.0 / predictions.len() as f64);
    let grad = predictions.map(|p| {
        if p < lo || p > hi {
            T::zero()
        } else {
            k * (p - y) / (p * (T::one() - p))
        }
    });
    (bce_loss(predictions, label), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec([v.len(), 1, 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn lsgan_values() {
        assert_eq!(adversarial_loss_generator(&t(&[1.0, 1.0])), 0.0);
        assert_eq!(adversarial_loss_generator(&t(&[0.0, 0.0])), 1.0);
        assert_eq!(adversarial_loss_generator(&t(&[0.0, 2.0])), 1.0);
        assert_eq!(adversarial_loss_discriminator(&t(&[1.0; 3]), &t(&[0.0; 3])), 0.0);
        assert_eq!(adversarial_loss_discriminator(&t(&[0.0; 3]), &t(&[1.0; 3])), 1.0);
        assert_eq!(adversarial_loss_discriminator(&t(&[0.5; 3]), &t(&[0.5; 3])), 0.25);
    }

    #[test]
    fn cycle_values() {
        let x = t(&[0.2, 0.4, 0.9]);
        assert_eq!(cycle_loss(&x, &x).unwrap(), 0.0);
        let off = x.map(|v| v + 0.1);
        assert!((cycle_loss(&x, &off).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(cycle_loss(&t(&[0.0, 1.0]), &t(&[1.0, 0.0])).unwrap(), 1.0);
        assert!(cycle_loss(&t(&[0.0]), &t(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(&t(&[0.5]), 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!(bce_loss(&t(&[1.0]), 1.0) < 1e-6);
        assert!(bce_loss(&t(&[0.0]), 1.0).is_finite());
        let v = bce_loss_labels(&t(&[0.9, 0.1]), &t(&[1.0, 0.0])).unwrap();
        assert!((v - -(0.9f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_differences() {
        let s = t(&[0.3, -0.7, 1.4]);
        let f = t(&[0.2, 0.5, -0.1]);
        let h = 1e-6;
        let (_, g) = adversarial_loss_generator_grad(&s);
        let (_, gr, gf) = adversarial_loss_discriminator_grad(&s, &f);
        let p = t(&[0.3, 0.6, 0.8]);
        let (_, gb) = bce_loss_grad(&p, 1.0);
        let x = t(&[0.0, 0.5, 1.0]);
        let (_, gc) = cycle_loss_grad(&x, &s).unwrap();
        for i in 0..3 {
            let bump = |v: &Tensor4<f64>, d: f64| {
                let mut w = v.clone();
                w.data_mut()[i] += d;
                w
            };
            let fd = |f: &dyn Fn(&Tensor4<f64>) -> f64, v: &Tensor4<f64>| (f(&bump(v, h)) - f(&bump(v, -h))) / (2.0 * h);
            assert!((fd(&|v| adversarial_loss_generator(v), &s) - g.data()[i]).abs() < 1e-8);
            assert!((fd(&|v| adversarial_loss_discriminator(v, &f), &s) - gr.data()[i]).abs() < 1e-8);
            assert!((fd(&|v| adversarial_loss_discriminator(&s, v), &f) - gf.data()[i]).abs() < 1e-8);
            assert!((fd(&|v| bce_loss(v, 1.0), &p) - gb.data()[i]).abs() < 1e-7);
            assert!((fd(&|v| cycle_loss(&x, v).unwrap(), &s) - gc.data()[i]).abs() < 1e-8);
        }
    }
}
