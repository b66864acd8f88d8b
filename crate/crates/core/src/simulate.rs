//! Replicated layer-count data and its reduction to sufficient statistics.
//!
//! Two samplers produce the same law by different routes: [`simulate_direct`]
//! draws each layer count as an independent Poisson variable with mean
//! `lambda_t * m_i`, while [`simulate_mechanistic`] draws the beam, splits it
//! over the modes and thins each mode packet layer by layer. Replication `j`
//! always draws from substream `seed.substream(j)`, so output does not depend
//! on how rows are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeamConfig, ModelParams};
use crate::sampling::{binomial, multinomial, poisson, RngSeed, MAX_POISSON_MEAN};
use crate::scalar::Scalar;

/// `n x k` absorbed counts, one row per replication.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: Vec<u64>,
    config: BeamConfig,
}

impl CountMatrix {
    pub fn new(counts: Vec<u64>, config: BeamConfig) -> Result<Self> {
        if counts.len() != config.n * config.k {
            return Err(Error::Dimension(format!(
                "{} counts do not fill a {} x {} matrix",
                counts.len(),
                config.n,
                config.k
            )));
        }
        Ok(Self { counts, config })
    }

    pub fn from_rows(rows: Vec<Vec<u64>>, lambda_t: f64) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("rows have differing lengths".into()));
        }
        let config = BeamConfig::new(lambda_t, n, k)?;
        Self::new(rows.into_iter().flatten().collect(), config)
    }

    pub fn config(&self) -> &BeamConfig {
        &self.config
    }

    pub fn replications(&self) -> usize {
        self.config.n
    }

    pub fn layers(&self) -> usize {
        self.config.k
    }

    /// Counts of replication `j` (0-based) across all layers.
    pub fn row(&self, j: usize) -> &[u64] {
        let k = self.config.k;
        &self.counts[j * k..(j + 1) * k]
    }

    /// Count at layer `i`, replication `j` (both 0-based).
    pub fn get(&self, layer: usize, rep: usize) -> u64 {
        self.counts[rep * self.config.k + layer]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.config.k)
    }

    /// Exact per-layer totals over all replications.
    pub fn layer_totals(&self) -> Vec<u128> {
        let mut totals = vec![0u128; self.config.k];
        for row in self.rows() {
            for (t, &x) in totals.iter_mut().zip(row) {
                *t += u128::from(x);
            }
        }
        totals
    }
}

fn layer_means<T: Scalar>(params: &ModelParams<T>, config: &BeamConfig) -> Result<Vec<f64>> {
    let means: Vec<f64> = params
        .forward_moments(config.k)
        .0
        .iter()
        .map(|m| config.lambda_t * m.to_f64_lossy())
        .collect();
    if let Some(&mean) = means.iter().find(|&&m| !(m <= MAX_POISSON_MEAN)) {
        return Err(Error::CountOverflow { mean });
    }
    Ok(means)
}

fn collect_rows(config: &BeamConfig, f: impl Fn(usize) -> Vec<u64> + Sync + Send) -> Result<CountMatrix> {
    let rows: Vec<Vec<u64>> = (0..config.n).into_par_iter().map(f).collect();
    CountMatrix::new(rows.into_iter().flatten().collect(), *config)
}

/// Independent Poisson counts with means `lambda_t * m_i`.
pub fn simulate_direct<T: Scalar>(params: &ModelParams<T>, config: &BeamConfig, seed: RngSeed) -> Result<CountMatrix> {
    let means = layer_means(params, config)?;
    collect_rows(config, |j| {
        let mut rng = seed.substream(j as u64).rng();
        means.iter().map(|&mu| poisson(&mut rng, mu)).collect()
    })
}

/// Beam draw, multinomial mode split and layer-by-layer binomial thinning.
pub fn simulate_mechanistic<T: Scalar>(
    params: &ModelParams<T>,
    config: &BeamConfig,
    seed: RngSeed,
) -> Result<CountMatrix> {
    simulate_mechanistic_with_beam(params, config, seed).map(|(m, _)| m)
}

/// As [`simulate_mechanistic`], also returning the beam size of each replication.
pub fn simulate_mechanistic_with_beam<T: Scalar>(
    params: &ModelParams<T>,
    config: &BeamConfig,
    seed: RngSeed,
) -> Result<(CountMatrix, Vec<u64>)> {
    if config.lambda_t > MAX_POISSON_MEAN {
        return Err(Error::CountOverflow { mean: config.lambda_t });
    }
    let q: Vec<f64> = params.q().iter().map(|x| x.to_f64_lossy()).collect();
    let absorb: Vec<f64> = params.p().iter().map(|x| 1.0 - x.to_f64_lossy()).collect();
    let k = config.k;
    let rows: Vec<(Vec<u64>, u64)> = (0..config.n)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.substream(j as u64).rng();
            let beam = poisson(&mut rng, config.lambda_t);
            let packets = multinomial(&mut rng, beam, &q);
            let mut row = vec![0u64; k];
            for (mut surviving, &pa) in packets.into_iter().zip(&absorb) {
                for x in row.iter_mut() {
                    if surviving == 0 {
                        break;
                    }
                    let absorbed = binomial(&mut rng, surviving, pa);
                    *x += absorbed;
                    surviving -= absorbed;
                }
            }
            (row, beam)
        })
        .collect();
    let mut counts = Vec::with_capacity(config.n * k);
    let mut beams = Vec::with_capacity(config.n);
    for (row, beam) in rows {
        counts.extend(row);
        beams.push(beam);
    }
    Ok((CountMatrix::new(counts, *config)?, beams))
}

/// Normalized layer means `b_hat` and tail sums `a_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub b_hat: Vec<f64>,
    pub a_hat: Vec<f64>,
}

impl SufficientStats {
    /// Builds `a_hat` from `b_hat`: `a_1 = 1`, `a_{i+1} = a_i - b_i`.
    pub fn from_b_hat(b_hat: Vec<f64>) -> Self {
        let mut a_hat = Vec::with_capacity(b_hat.len() + 1);
        let mut acc = 1.0;
        a_hat.push(acc);
        for &b in &b_hat {
            acc -= b;
            a_hat.push(acc);
        }
        Self { b_hat, a_hat }
    }

    pub fn layers(&self) -> usize {
        self.b_hat.len()
    }
}

/// Reduces counts to sufficient statistics. Layer totals are accumulated
/// exactly in integers before the single division by `n * lambda_t`.
pub fn sufficient_stats(data: &CountMatrix) -> Result<SufficientStats> {
    let cfg = data.config();
    if !(cfg.lambda_t > 0.0) {
        return Err(Error::InvalidConfig("sufficient statistics need lambda_t > 0".into()));
    }
    let denom = cfg.n as f64 * cfg.lambda_t;
    let b_hat = data.layer_totals().into_iter().map(|t| t as f64 / denom).collect();
    Ok(SufficientStats::from_b_hat(b_hat))
}
