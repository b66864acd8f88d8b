#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinning_core::{ModelParams, Scalar};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid model with `p` in (0.01, 0.99), consecutive gaps at least
/// `min_gap` and every `q_r` at least `min_q`, by rejection.
pub fn random_model<T: Scalar>(rng: &mut impl Rng, s: usize, min_gap: f64, min_q: f64) -> ModelParams<T> {
    let p = loop {
        let mut p: Vec<f64> = (0..s).map(|_| rng.random_range(0.01..0.99)).collect();
        p.sort_by(|a, b| b.total_cmp(a));
        if p.windows(2).all(|w| w[0] - w[1] >= min_gap) {
            break p;
        }
    };
    let q = loop {
        let w: Vec<f64> = (0..s).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|x| x / total).collect();
        if q.iter().all(|&x| x >= min_q) {
            break q;
        }
    };
    // normalize in the target precision so the simplex holds there
    let qt: Vec<T> = q.iter().map(|&x| T::of(x)).collect();
    let total: T = qt.iter().copied().sum();
    ModelParams::new(qt.into_iter().map(|x| x / total).collect(), p.iter().map(|&x| T::of(x)).collect())
        .expect("generated model is valid")
}

/// Least-squares decreasing fit by enumerating every split into contiguous
/// blocks, averaging each block and keeping the best fit whose block means
/// do not increase.
pub fn brute_force_decreasing(v: &[f64]) -> Vec<f64> {
    let s = v.len();
    if s == 0 {
        return Vec::new();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (s - 1)) {
        // bit i set means a cut after position i
        let mut fit = Vec::with_capacity(s);
        let mut start = 0;
        for end in 1..=s {
            if end == s || mask & (1 << (end - 1)) != 0 {
                let block = &v[start..end];
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                fit.extend(std::iter::repeat(mean).take(block.len()));
                start = end;
            }
        }
        if fit.windows(2).any(|w| w[1] > w[0]) {
            continue;
        }
        let sse: f64 = fit.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.expect("the single-block fit is always decreasing").1
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `V diag(q) V^T` with `V[i][r] = p_r^i`, `i = 0..s-1`.
pub fn vandermonde_gram(q: &[f64], p: &[f64]) -> Vec<Vec<f64>> {
    let s = q.len();
    (0..s)
        .map(|i| (0..s).map(|j| (0..s).map(|r| p[r].powi(i as i32) * q[r] * p[r].powi(j as i32)).sum()).collect())
        .collect()
}
