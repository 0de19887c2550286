use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// HeUniform: samples in `[-b, b]` with `b = sqrt(6 / fan_in)`.
pub fn he_uniform_init<T: Scalar>(dims: &[usize], fan_in: usize, seed: u64) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::invalid("he_uniform_init", "fan_in must be at least 1"));
    }
    let bound = he_uniform_bound(fan_in);
    Tensor::uniform(dims, -bound, bound, seed)
}

pub fn he_uniform_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Per-tensor seed derived from a base seed and the parameter name, so that
/// initial values do not depend on construction order.
pub fn derive_seed(base: u64, name: &str) -> u64 {
    // FNV-1a over the name, then a splitmix64 finalizer over (base ^ hash).
    let hash = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut z = (base ^ hash).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_formula() {
        assert_eq!(he_uniform_bound(6), 1.0);
        let t = he_uniform_init::<f64>(&[1000], 6, 3).unwrap();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_bytes() {
        let a = he_uniform_init::<f32>(&[64], 9, 42).unwrap();
        let b = he_uniform_init::<f32>(&[64], 9, 42).unwrap();
        let bytes = |t: &Tensor<f32>| t.data().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>();
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn empirical_mean_near_zero() {
        let t = he_uniform_init::<f64>(&[100_000], 6, 11).unwrap();
        let mean = t.data().iter().sum::<f64>() / t.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(he_uniform_init::<f32>(&[3], 0, 1).is_err());
    }

    #[test]
    fn seeds_differ_by_name() {
        assert_ne!(derive_seed(1, "a.weight"), derive_seed(1, "b.weight"));
        assert_ne!(derive_seed(1, "a.weight"), derive_seed(2, "a.weight"));
        assert_eq!(derive_seed(5, "x"), derive_seed(5, "x"));
    }
}
