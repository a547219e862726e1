use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Shuffled index batches for one epoch. The order depends only on
/// `(seed, epoch)`; the last batch may be short.
pub fn make_batches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Endless batch stream across epochs, as consumed by the training loop.
#[derive(Clone, Debug)]
pub struct BatchStream {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pending: std::collections::VecDeque<Vec<usize>>,
}

impl BatchStream {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("cannot batch an empty dataset"));
        }
        make_batches(len, batch_size, seed, 0)?;
        Ok(Self { len, batch_size, seed, epoch: 0, pending: Default::default() })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pending.is_empty() {
            let batches = make_batches(self.len, self.batch_size, self.seed, self.epoch).expect("validated in new");
            self.pending.extend(batches);
            self.epoch += 1;
        }
        self.pending.pop_front().expect("non-empty dataset")
    }
}

/// Zeroes background pixels of an N×3×H×W batch using an N×1×H×W binary mask.
pub fn apply_mask<T: Scalar>(image: &Tensor<T>, mask: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = image.dims4()?;
    let (mn, mc, mh, mw) = mask.dims4()?;
    if (mn, mc, mh, mw) != (n, 1, h, w) {
        return Err(Error::shape(format!(
            "mask {:?} does not match image {:?} (expected {:?})",
            mask.shape(),
            image.shape(),
            [n, 1, h, w]
        )));
    }
    let plane = h * w;
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let (b, p) = (i / (c * plane), i % plane);
        if mask.data()[b * plane + p] <= T::lit(0.5) {
            *v = T::zero();
        }
    }
    Ok(out)
}
