//! History buffer of generated images shown to the discriminators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Tensor4;

pub const DEFAULT_POOL_SIZE: usize = 50;

/// Exact, serializable position of a ChaCha8 generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Corruption(format!("malformed rng state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Clone, Debug)]
pub struct ImagePool {
    pub capacity: usize,
    /// Single images, each `(1, c, h, w)`.
    pub buffer: Vec<Tensor4<f32>>,
    pub rng: ChaCha8Rng,
}

impl PartialEq for ImagePool {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity && self.buffer == other.buffer && self.rng == other.rng
    }
}

impl ImagePool {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Per image: while filling, store and return it; once full, with
    /// probability 0.5 return a random stored image (putting the fresh one in
    /// its place), otherwise return the fresh image.
    pub fn query(&mut self, fresh: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        if self.capacity == 0 {
            return Ok(fresh.clone());
        }
        let mut out = Vec::with_capacity(fresh.batch());
        for n in 0..fresh.batch() {
            let img = fresh.select(n);
            if let Some(first) = self.buffer.first() {
                img.check_same_shape(first)?;
            }
            if self.buffer.len() < self.capacity {
                self.buffer.push(img.clone());
                out.push(img);
            } else if self.rng.random::<f64>() < 0.5 {
                let k = self.rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.buffer[k], img));
            } else {
                out.push(img);
            }
        }
        let refs: Vec<&Tensor4<f32>> = out.iter().collect();
        Tensor4::stack(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(start: usize, n: usize) -> Tensor4<f32> {
        Tensor4::from_fn([n, 1, 2, 2], |[b, ..]| (start + b) as f32)
    }

    #[test]
    fn fill_phase_returns_fresh() {
        let mut pool = ImagePool::new(50, 1);
        for k in 0..50 / 5 {
            let b = batch(5 * k, 5);
            assert_eq!(pool.query(&b).unwrap(), b);
        }
        assert_eq!(pool.buffer.len(), 50);
    }

    #[test]
    fn zero_capacity_is_passthrough() {
        let mut pool = ImagePool::new(0, 1);
        let b = batch(0, 4);
        assert_eq!(pool.query(&b).unwrap(), b);
        assert!(pool.buffer.is_empty());
    }

    #[test]
    fn swap_fraction_is_half() {
        let mut pool = ImagePool::new(50, 3);
        pool.query(&batch(0, 50)).unwrap();
        let mut swapped = 0;
        let queries = 10_000;
        for q in 0..queries {
            let b = batch(1000 + q, 1);
            let out = pool.query(&b).unwrap();
            swapped += (out != b) as usize;
            assert!(pool.buffer.len() <= 50);
            assert_eq!(out.shape(), b.shape());
        }
        let frac = swapped as f64 / queries as f64;
        assert!((frac - 0.5).abs() < 0.02, "swap fraction {frac}");
    }

    #[test]
    fn rng_state_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.set_stream(5);
        let _: u64 = rng.random();
        let mut back = RngState::capture(&rng).restore().unwrap();
        assert_eq!(rng.random::<u64>(), back.random::<u64>());
    }
}
