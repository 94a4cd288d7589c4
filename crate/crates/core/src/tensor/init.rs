use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Glorot/Xavier uniform initialization: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Mat<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of(rng.random_range(-bound..bound)))
        .collect();
    Mat::new(fan_in, fan_out, data).expect("shape matches data")
}
