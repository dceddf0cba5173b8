use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::slices::SliceImage;
use crate::error::{Error, Result};
use crate::nncore::{Real, Tensor4};

/// Visiting order for one epoch. Shuffled orders are keyed by `(seed, epoch)`:
/// the seed picks the generator, the epoch picks its stream.
pub fn epoch_order(len: usize, shuffle: bool, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    order
}

/// Stack images into a `(n, 1, h, w)` tensor.
pub fn to_tensor<T: Real>(images: &[&SliceImage]) -> Result<Tensor4<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Parameter("cannot batch zero images".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::Dimension {
                axis: "height",
                expected: h,
                actual: img.height,
            });
        }
        data.extend(img.pixels.iter().map(|&v| T::lit(v)));
    }
    Tensor4::from_vec([images.len(), 1, h, w], data)
}

/// Batches of one epoch; the last batch may be short.
pub struct BatchIter<'a> {
    images: &'a [SliceImage],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<'a> BatchIter<'a> {
    /// Indices (into the image list) of the upcoming batches, in order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Tensor4<f32>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let picked: Vec<&SliceImage> = self.order[self.pos..end].iter().map(|&i| &self.images[i]).collect();
        self.pos = end;
        Some(to_tensor(&picked))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

pub fn batch_iter(images: &[SliceImage], batch_size: usize, shuffle: bool, seed: u64, epoch: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be >= 1".into()));
    }
    Ok(BatchIter {
        images,
        order: epoch_order(images.len(), shuffle, seed, epoch),
        batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::slices::{DomainTag, Provenance};

    fn images(n: usize) -> Vec<SliceImage> {
        (0..n)
            .map(|i| {
                SliceImage::new(vec![i as f64; 4], 2, 2, Provenance { source_id: "v".into(), slice_index: i }, DomainTag::Synthetic)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn ten_by_four() {
        let imgs = images(10);
        let sizes: Vec<usize> = batch_iter(&imgs, 4, true, 1, 0).unwrap().map(|b| b.unwrap().batch()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn unshuffled_keeps_order() {
        let imgs = images(5);
        let firsts: Vec<f32> = batch_iter(&imgs, 2, false, 1, 3)
            .unwrap()
            .flat_map(|b| {
                let b = b.unwrap();
                (0..b.batch()).map(move |n| b.sample(n)[0]).collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(firsts, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn epochs_differ_but_reproduce() {
        let e0 = epoch_order(32, true, 8, 0);
        let e1 = epoch_order(32, true, 8, 1);
        assert_ne!(e0, e1);
        assert_eq!(e0, epoch_order(32, true, 8, 0));
        assert_eq!(e1, epoch_order(32, true, 8, 1));
    }

    #[test]
    fn zero_batch_rejected() {
        assert!(batch_iter(&images(3), 0, false, 0, 0).is_err());
    }
}
