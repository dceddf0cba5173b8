use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Tensor4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second-moment accumulators for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamSlots {
    pub m: Vec<Tensor4<f32>>,
    pub v: Vec<Tensor4<f32>>,
    pub t: u64,
}

impl AdamSlots {
    pub fn new(params: &[Tensor4<f32>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor4::zeros(p.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [Tensor4<f32>], grads: &[Tensor4<f32>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                axis: "parameters",
                expected: self.m.len(),
                actual: grads.len(),
            });
        }
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = (cfg.lr / c1) as f32;
        let (b1, b2, c2, eps) = (b1 as f32, b2 as f32, c2 as f32, cfg.eps as f32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            p.check_same_shape(g)?;
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut());
            for (((w, &gi), mi), vi) in iter {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *w -= step * *mi / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step lr * sign(g)
        let cfg = AdamConfig { lr: 0.01, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
        let mut p = vec![Tensor4::from_vec([2, 1, 1, 1], vec![1.0f32, 1.0]).unwrap()];
        let g = vec![Tensor4::from_vec([2, 1, 1, 1], vec![3.0f32, -0.5]).unwrap()];
        let mut slots = AdamSlots::new(&p);
        slots.step(&cfg, &mut p, &g).unwrap();
        assert!((p[0].data()[0] - 0.99).abs() < 1e-6);
        assert!((p[0].data()[1] - 1.01).abs() < 1e-6);
        assert_eq!(slots.t, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let cfg = AdamConfig { lr: 0.05, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
        let mut p = vec![Tensor4::from_vec([1, 1, 1, 1], vec![4.0f32]).unwrap()];
        let mut slots = AdamSlots::new(&p);
        for _ in 0..500 {
            let g = vec![p[0].map(|w| 2.0 * (w - 1.5))];
            slots.step(&cfg, &mut p, &g).unwrap();
        }
        assert!((p[0].data()[0] - 1.5).abs() < 0.05);
    }
}
