use rand::Rng;

use super::Tensor;

/// Uniform Glorot initialization, `U(±sqrt(6 / (fan_in + fan_out)))`.
pub fn glorot_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    Tensor::uniform(shape, -limit, limit, rng)
}
