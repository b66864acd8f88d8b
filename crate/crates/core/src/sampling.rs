//! Random variate generation with pinned algorithms and reproducible substreams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Largest Poisson mean accepted by the samplers.
pub const MAX_POISSON_MEAN: f64 = 1e15;
/// Means below this use sequential inversion, above it PTRS rejection.
pub const INVERSION_CUTOFF: f64 = 10.0;

/// Seed plus substream index; identical values reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Independent child seed whose streams are indexed by `index`.
    ///
    /// The child key mixes this seed and stream, so children of different
    /// parents never share a ChaCha key.
    pub fn substream(&self, index: u64) -> Self {
        Self { seed: splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(0x5851_f42d_4c95_7f2d))), stream_id: index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Poisson variate: inversion for small means, PTRS (Hormann 1993) otherwise.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean.is_finite() && mean >= 0.0);
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_CUTOFF {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let mut u: f64 = rng.random();
    let mut k = 0u64;
    let mut pk = (-mean).exp();
    loop {
        if u <= pk {
            return k;
        }
        u -= pk;
        k += 1;
        pk *= mean / k as f64;
        if pk == 0.0 && k as f64 > mean {
            // tail mass below double precision; restart the draw
            u = rng.random();
            k = 0;
            pk = (-mean).exp();
        }
    }
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// Binomial variate; `p` is clamped into `[0, 1]`.
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p).expect("probability checked above").sample(rng)
}

/// Multinomial split of `total` items over `probs` by conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, total: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = total;
    let mut mass_left: f64 = probs.iter().sum();
    for (i, &pr) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let cond = if mass_left > 0.0 { (pr / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let x = binomial(rng, remaining, cond);
        out[i] = x;
        remaining -= x;
        mass_left -= pr;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[u64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let s = RngSeed::new(42);
        let a: u64 = s.substream(3).rng().random();
        let b: u64 = s.substream(3).rng().random();
        let c: u64 = s.substream(4).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(s.substream(3).substream(0), s.substream(4).substream(0));
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = RngSeed::new(1).rng();
        assert_eq!(poisson(&mut rng, 0.0), 0);
    }

    #[test]
    fn poisson_mean_and_variance_both_regimes() {
        for &mean in &[0.3, 4.0, 9.99, 10.0, 57.0, 1000.0] {
            let mut rng = RngSeed::with_stream(7, mean as u64).rng();
            let xs: Vec<u64> = (0..40_000).map(|_| poisson(&mut rng, mean)).collect();
            let (m, v) = moments(&xs);
            let se_mean = (mean / xs.len() as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se_mean, "mean {mean}: got {m}");
            // Var of sample variance ~ (mu + 2 mu^2) / n for the Poisson law
            let se_var = ((mean + 2.0 * mean * mean) / xs.len() as f64).sqrt();
            assert!((v - mean).abs() < 4.0 * se_var, "mean {mean}: variance {v}");
        }
    }

    #[test]
    fn poisson_small_mean_pmf() {
        let mean = 2.5;
        let mut rng = RngSeed::new(11).rng();
        let n = 100_000;
        let zeros = (0..n).filter(|_| poisson(&mut rng, mean) == 0).count() as f64 / n as f64;
        let p0 = (-mean as f64).exp();
        assert!((zeros - p0).abs() < 4.0 * (p0 * (1.0 - p0) / n as f64).sqrt());
    }

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = RngSeed::new(5).rng();
        for total in [0, 1, 17, 1000] {
            let split = multinomial(&mut rng, total, &[0.2, 0.5, 0.3]);
            assert_eq!(split.iter().sum::<u64>(), total);
        }
    }

    #[test]
    fn binomial_edges() {
        let mut rng = RngSeed::new(5).rng();
        assert_eq!(binomial(&mut rng, 10, 0.0), 0);
        assert_eq!(binomial(&mut rng, 10, 1.0), 10);
        assert_eq!(binomial(&mut rng, 0, 0.5), 0);
    }
}
