//! Seedable, splittable random streams.
//!
//! Every consumer asks for `stream(seed, purpose, index)`: a ChaCha8 generator
//! keyed by the mixed `(seed, purpose)` pair and positioned on substream
//! `index`. ChaCha is counter-based, so streams are independent and identical
//! on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Disjoint purposes for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Starts = 2,
    Bootstrap = 3,
    Replication = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A 64-bit seed for child `index` of `seed` under `purpose`.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(purpose as u64)) ^ index)
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose as u64)));
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval `(0, 1)`.
pub fn uniform_open<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Unit exponential by inversion.
pub fn exponential<R: RngCore>(rng: &mut R) -> f64 {
    -(-uniform_open(rng)).ln_1p()
}

/// Standard normal by inversion.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    crate::normal::quantile(uniform_open(rng))
}

/// Uniform index in `0..n`.
pub fn index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    // Lemire's multiply-shift with rejection; exact for every n.
    let n64 = n as u64;
    let threshold = n64.wrapping_neg() % n64;
    loop {
        let m = (rng.next_u64() as u128) * (n64 as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, Purpose::Data, 0).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = stream(7, Purpose::Data, 0);
        let mut s1 = stream(7, Purpose::Data, 1);
        let mut t0 = stream(7, Purpose::Starts, 0);
        let x = s0.next_u64();
        assert_ne!(x, s1.next_u64());
        assert_ne!(x, t0.next_u64());
    }

    #[test]
    fn known_first_draw() {
        // Frozen so that a dependency bump that changes the stream is caught.
        let mut s = stream(2024, Purpose::Data, 3);
        let first = s.next_u64();
        let again = stream(2024, Purpose::Data, 3).next_u64();
        assert_eq!(first, again);
        assert_eq!(first, 58_183_429_827_266_074);
    }

    #[test]
    fn samplers_in_range() {
        let mut s = stream(1, Purpose::Data, 0);
        for _ in 0..10_000 {
            let u = uniform_open(&mut s);
            assert!(u > 0.0 && u < 1.0);
            assert!(exponential(&mut s) > 0.0);
            assert!(standard_normal(&mut s).is_finite());
            assert!(index(&mut s, 7) < 7);
        }
    }

    #[test]
    fn exponential_mean() {
        let mut s = stream(3, Purpose::Data, 0);
        let n = 200_000;
        let mean = (0..n).map(|_| exponential(&mut s)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
