//! Samplers over the raw 64-bit output of the engine RNG.
//!
//! Only `next_u64` is consumed, so a trajectory depends on nothing but the
//! ChaCha8 keystream and the arithmetic below.

use rand::RngCore;

/// Uniform on `[0, 1)` with 53 random bits.
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Exponential with the given rate.
pub fn exponential<R: RngCore>(rng: &mut R, rate: f64) -> f64 {
    -(1.0 - uniform01(rng)).ln() / rate
}

/// Uniform on `0..n` by multiply-high; `n` must be positive.
pub fn uniform_index<R: RngCore>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Binomial(`n`, 1/2) as the number of set bits among `n` fair coin flips.
pub fn binomial_half<R: RngCore>(rng: &mut R, n: u32) -> u32 {
    let mut left = n;
    let mut count = 0;
    while left >= 64 {
        count += rng.next_u64().count_ones();
        left -= 64;
    }
    if left > 0 {
        count += (rng.next_u64() & ((1u64 << left) - 1)).count_ones();
    }
    count
}

const POISSON_CHUNK: f64 = 500.0;

/// Poisson by sequential inversion. Means above 500 are split into equal
/// chunks whose independent draws are summed, keeping `e^{-mean}` normal.
pub fn poisson<R: RngCore>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let chunks = (mean / POISSON_CHUNK).ceil().max(1.0);
    let part = mean / chunks;
    (0..chunks as u64).map(|_| poisson_inversion(rng, part)).sum()
}

fn poisson_inversion<R: RngCore>(rng: &mut R, mean: f64) -> u64 {
    let u = uniform01(rng);
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    let cap = (mean + 40.0 * mean.sqrt() + 100.0) as u64;
    while u >= cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let u = uniform01(&mut rng);
            assert!((0.0..1.0).contains(&u));
            assert!(uniform_index(&mut rng, 7) < 7);
        }
        assert_eq!(uniform_index(&mut rng, 1), 0);
    }

    #[test]
    fn sample_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let e: f64 = (0..n).map(|_| exponential(&mut rng, 4.0)).sum::<f64>() / n as f64;
        assert!((e - 0.25).abs() < 0.005, "{e}");
        let b: f64 = (0..n).map(|_| f64::from(binomial_half(&mut rng, 70))).sum::<f64>() / n as f64;
        assert!((b - 35.0).abs() < 0.05, "{b}");
        for mean in [0.3, 3.0, 40.0, 1234.5] {
            let m: f64 = (0..n / 10).map(|_| poisson(&mut rng, mean) as f64).sum::<f64>() / (n / 10) as f64;
            assert!((m - mean).abs() < 5.0 * (mean / (n / 10) as f64).sqrt(), "{mean} {m}");
        }
        assert_eq!(binomial_half(&mut rng, 0), 0);
        assert_eq!(poisson(&mut rng, 0.0), 0);
    }
}
