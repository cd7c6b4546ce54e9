use rand::Rng;

use crate::autograd::{Real, Tensor};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-limit..limit)))
}

/// Glorot init for a `[out, in, k, k]` (or `[in, out, k, k]`) kernel.
pub fn conv_kernel<T: Real, R: Rng + ?Sized>(rng: &mut R, shape: [usize; 4]) -> Tensor<T> {
    let kk = shape[2] * shape[3];
    glorot_uniform(rng, &shape, shape[1] * kk, shape[0] * kk)
}

/// ConvLSTM gate bias: zero except the forget block, which starts at 1.
pub fn lstm_bias<T: Real>(hidden: usize) -> Tensor<T> {
    Tensor::from_fn(&[4 * hidden], |i| {
        if (hidden..2 * hidden).contains(&i) {
            T::one()
        } else {
            T::zero()
        }
    })
}
