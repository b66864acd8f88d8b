//! Order-restricted estimation of the mode distribution.
//!
//! When the modes are known to be ordered by intensity, the estimate of `q` is
//! replaced by its least-squares projection onto decreasing vectors. The
//! limit law of the projected estimator depends on the runs of equal entries
//! ("flat regions") of the true `q`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::psd_factor;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sampling::RngSeed;
use crate::scalar::Scalar;

/// Projection of `source` onto decreasing vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedEstimate<T> {
    pub q_star: Vec<T>,
    pub source: Vec<T>,
}

/// Pool-adjacent-violators with unit weights, sweeping left to right.
pub fn pava_decreasing<T: Scalar>(v: &[T]) -> Vec<T> {
    // (sum, count) per block
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / T::from_usize(n0) >= s1 / T::from_usize(n1) {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    let mut out = Vec::with_capacity(v.len());
    for (sum, n) in blocks {
        let mean = sum / T::from_usize(n);
        out.extend(std::iter::repeat(mean).take(n));
    }
    out
}

pub fn project_decreasing<T: Scalar>(v: &[T]) -> OrderedEstimate<T> {
    OrderedEstimate { q_star: pava_decreasing(v), source: v.to_vec() }
}

/// One maximal run, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub start: usize,
    pub length: usize,
}

/// Contiguous cover of `1..=s` by runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Region>", into = "Vec<Region>")]
pub struct FlatPartition {
    regions: Vec<Region>,
}

impl FlatPartition {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidPartition("no regions".into()));
        }
        let mut next = 1;
        for r in &regions {
            if r.start != next {
                return Err(Error::InvalidPartition(format!("region starts at {} but {next} was expected", r.start)));
            }
            if r.length == 0 {
                return Err(Error::InvalidPartition(format!("empty region at {}", r.start)));
            }
            next += r.length;
        }
        Ok(Self { regions })
    }

    /// Builds the partition from run lengths.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut start = 1;
        let regions = lengths
            .iter()
            .map(|&length| {
                let r = Region { start, length };
                start += length;
                r
            })
            .collect();
        Self::new(regions)
    }

    pub fn singletons(s: usize) -> Self {
        Self { regions: (1..=s).map(|start| Region { start, length: 1 }).collect() }
    }

    pub fn single(s: usize) -> Self {
        Self { regions: vec![Region { start: 1, length: s }] }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn starts(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.start).collect()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.regions.iter().map(|r| r.length).collect()
    }

    /// Total length `s` covered.
    pub fn len(&self) -> usize {
        self.regions.iter().map(|r| r.length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

impl TryFrom<Vec<Region>> for FlatPartition {
    type Error = Error;

    fn try_from(regions: Vec<Region>) -> Result<Self> {
        Self::new(regions)
    }
}

impl From<FlatPartition> for Vec<Region> {
    fn from(p: FlatPartition) -> Self {
        p.regions
    }
}

/// Maximal runs of values equal within `tol`; `q` must be decreasing within `tol`.
pub fn flat_regions<T: Scalar>(q: &[T], tol: f64) -> Result<FlatPartition> {
    if q.is_empty() {
        return Err(Error::Dimension("empty vector".into()));
    }
    let tol = T::of(tol);
    let mut lengths = vec![1usize];
    for (i, w) in q.windows(2).enumerate() {
        let rise = w[1] - w[0];
        if rise > tol {
            return Err(Error::NotDecreasing { index: i + 2, excess: rise.to_f64_lossy() });
        }
        if rise.abs() <= tol {
            *lengths.last_mut().unwrap() += 1;
        } else {
            lengths.push(1);
        }
    }
    FlatPartition::from_lengths(&lengths)
}

/// Per-region isotonic regression; order across regions is not enforced.
pub fn phi_map<T: Scalar>(y: &[T], partition: &FlatPartition) -> Result<Vec<T>> {
    if y.len() != partition.len() {
        return Err(Error::Dimension(format!("vector has length {}, partition covers {}", y.len(), partition.len())));
    }
    let mut out = Vec::with_capacity(y.len());
    for r in partition.regions() {
        let slice = &y[r.start - 1..r.start - 1 + r.length];
        out.extend(pava_decreasing(slice));
    }
    Ok(out)
}

/// Draws `reps` vectors from `N(0, sigma_qq)` and maps each through [`phi_map`].
///
/// Row `j` uses `seed.substream(j)`, so the result does not depend on the
/// thread schedule.
pub fn sample_limit_law(sigma_qq: &Matrix<f64>, partition: &FlatPartition, reps: usize, seed: RngSeed) -> Result<Matrix<f64>> {
    let s = sigma_qq.rows();
    if !sigma_qq.is_square() || s != partition.len() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, partition covers {}",
            sigma_qq.rows(),
            sigma_qq.cols(),
            partition.len()
        )));
    }
    if sigma_qq.asymmetry() > 1e-10 * sigma_qq.max_abs().max(1.0) {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: f64::NAN, trace: sigma_qq.trace() });
    }
    let factor = psd_factor(sigma_qq)?;
    let rows: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.substream(j as u64).rng();
            let z: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
            let g = factor.matvec(&z);
            phi_map(&g, partition).expect("dimensions checked")
        })
        .collect();
    Ok(Matrix::from_row_major(reps, s, rows.concat()))
}

/// `l^alpha` distance; `alpha = None` is the max norm.
pub fn lp_distance(a: &[f64], b: &[f64], alpha: Option<u32>) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match alpha {
        None => diffs.fold(0.0, f64::max),
        Some(1) => diffs.sum(),
        Some(k) => diffs.map(|d| d.powi(k as i32)).sum::<f64>().powf(1.0 / k as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava_decreasing(&[0.5, 0.3, 0.2]), vec![0.5, 0.3, 0.2]);
        assert!(close(&pava_decreasing(&[0.35, 0.45, 0.20]), &[0.4, 0.4, 0.2]));
        let third = 1.0 / 3.0;
        assert!(close(&pava_decreasing(&[0.2, 0.3, 0.5]), &[third, third, third]));
        assert!(pava_decreasing::<f64>(&[]).is_empty());
    }

    #[test]
    fn back_merging_cascades() {
        // the last value forces a merge with two earlier pooled blocks
        let out = pava_decreasing(&[3.0, 1.0, 2.0, 10.0]);
        assert!(close(&out, &[4.0; 4]));
    }

    #[test]
    fn flat_region_examples() {
        let p = flat_regions(&[0.4, 0.4, 0.2], 1e-12).unwrap();
        assert_eq!(p.starts(), vec![1, 3]);
        assert_eq!(p.lengths(), vec![2, 1]);
        assert_eq!(p.region_count(), 2);
        assert_eq!(flat_regions(&[0.5, 0.3, 0.2], 1e-12).unwrap(), FlatPartition::singletons(3));
        assert_eq!(flat_regions(&[0.25; 4], 1e-12).unwrap(), FlatPartition::single(4));
        assert!(matches!(flat_regions(&[0.2, 0.5], 1e-12), Err(Error::NotDecreasing { index: 2, .. })));
    }

    #[test]
    fn phi_map_examples() {
        let part = FlatPartition::from_lengths(&[2, 1]).unwrap();
        assert!(close(&phi_map(&[0.1, 0.2, 5.0], &part).unwrap(), &[0.15, 0.15, 5.0]));
        let y = [0.3, -0.1, 0.7];
        assert_eq!(phi_map(&y, &FlatPartition::singletons(3)).unwrap(), y.to_vec());
        assert_eq!(phi_map(&y, &FlatPartition::single(3)).unwrap(), pava_decreasing(&y));
        assert!(matches!(phi_map(&y, &FlatPartition::single(2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn partition_validation_and_json() {
        assert!(FlatPartition::new(vec![Region { start: 2, length: 1 }]).is_err());
        assert!(FlatPartition::from_lengths(&[1, 0]).is_err());
        let p = FlatPartition::from_lengths(&[2, 1]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"[{"start":1,"length":2},{"start":3,"length":1}]"#);
        assert_eq!(serde_json::from_str::<FlatPartition>(&json).unwrap(), p);
        assert!(serde_json::from_str::<FlatPartition>(r#"[{"start":2,"length":1}]"#).is_err());
    }

    #[test]
    fn limit_law_zero_covariance_and_determinism() {
        let zero = Matrix::zeros(2, 2);
        let out = sample_limit_law(&zero, &FlatPartition::single(2), 10, RngSeed::new(3)).unwrap();
        assert!(out.as_slice().iter().all(|&x| x == 0.0));

        let sigma = Matrix::from_row_major(2, 2, vec![1.0, -1.0, -1.0, 1.0]);
        let a = sample_limit_law(&sigma, &FlatPartition::single(2), 50, RngSeed::new(9)).unwrap();
        let b = sample_limit_law(&sigma, &FlatPartition::single(2), 50, RngSeed::new(9)).unwrap();
        assert_eq!(a, b);
        for j in 0..50 {
            assert!(a[(j, 0)] >= a[(j, 1)]);
            assert!((a[(j, 0)] + a[(j, 1)]).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_law_rejects_indefinite() {
        let bad = Matrix::from_row_major(2, 2, vec![1.0, 3.0, 3.0, 1.0]);
        assert!(sample_limit_law(&bad, &FlatPartition::singletons(2), 5, RngSeed::new(1)).is_err());
    }

    #[test]
    fn norms() {
        let a = [1.0, -2.0];
        let z = [0.0, 0.0];
        assert_eq!(lp_distance(&a, &z, Some(1)), 3.0);
        assert!((lp_distance(&a, &z, Some(2)) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(lp_distance(&a, &z, None), 2.0);
    }
}
