//! Parameter initialisers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;
use crate::Real;

/// Glorot/Xavier uniform: `U(-b, b)`, `b = sqrt(6 / (fan_in + fan_out))`.
///
/// For 4-D conv weights the receptive field multiplies both fans, matching
/// the usual `[out, in, kh, kw]` convention.
pub fn xavier_uniform<T: Real, R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape product")
}

/// Normal(0, std) truncated to `[-2 std, 2 std]` by rejection.
pub fn trunc_normal<T: Real, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break T::lit(z * std);
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape product")
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [o, i] => (*i, *o),
        [o, i, rest @ ..] => {
            let rf: usize = rest.iter().product();
            (i * rf, o * rf)
        }
        [] => (1, 1),
    }
}
