//! Parameter space and forward maps of the thinned multimode Poisson model.
//!
//! A beam of `s` modes with distribution `q` hits `k` detector layers; a
//! mode-`r` particle passes each layer with probability `p_r`. Per unit of
//! `lambda * t`, layer `i` (1-based) absorbs on average
//!
//! ```text
//! m_i = sum_r (1 - p_r) p_r^(i-1) q_r
//! ```
//!
//! and the generalized power sums `a_i = sum_r q_r p_r^(i-1)` telescope as
//! `a_{i+1} = a_i - m_i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum gap enforced between consecutive transmission probabilities.
pub const MIN_P_GAP: f64 = 1e-10;
/// Allowed deviation of `sum(q)` from one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A single constraint of the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `q` and `p` have the same, nonzero length.
    Length,
    /// Every entry is a finite number.
    Finite,
    /// `sum(q) = 1`.
    Simplex,
    /// Every `q_r > 0`.
    Positivity,
    /// Every `p_r` lies in the open unit interval.
    UnitInterval,
    /// `p_1 > p_2 > ... > p_s`.
    StrictOrdering,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Constraint::Length => "equal nonzero length",
            Constraint::Finite => "finite entries",
            Constraint::Simplex => "simplex (q sums to one)",
            Constraint::Positivity => "positivity (q_r > 0)",
            Constraint::UnitInterval => "unit interval (0 < p_r < 1)",
            Constraint::StrictOrdering => "strict ordering (p strictly decreasing)",
        };
        f.write_str(name)
    }
}

/// Pass/fail outcome of every parameter-space constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub length: bool,
    pub finite: bool,
    pub simplex: bool,
    pub positivity: bool,
    pub unit_interval: bool,
    pub strict_ordering: bool,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn violations(&self) -> Vec<Constraint> {
        [
            (self.length, Constraint::Length),
            (self.finite, Constraint::Finite),
            (self.simplex, Constraint::Simplex),
            (self.positivity, Constraint::Positivity),
            (self.unit_interval, Constraint::UnitInterval),
            (self.strict_ordering, Constraint::StrictOrdering),
        ]
        .into_iter()
        .filter_map(|(ok, c)| (!ok).then_some(c))
        .collect()
    }
}

/// Checks `(q, p)` against the parameter space and reports each constraint.
pub fn validate_feasible<T: Scalar>(q: &[T], p: &[T]) -> FeasibilityReport {
    let length = !q.is_empty() && q.len() == p.len();
    let finite = q.iter().chain(p).all(|x| x.is_finite());
    let total: T = q.iter().copied().sum();
    let simplex = finite && (total - T::one()).abs() <= T::tolerance(SIMPLEX_TOL);
    let positivity = q.iter().all(|&x| x > T::zero());
    let unit_interval = p.iter().all(|&x| x > T::zero() && x < T::one());
    let gap = T::of(MIN_P_GAP);
    let strict_ordering = p.windows(2).all(|w| w[0] - w[1] > gap);
    FeasibilityReport { length, finite, simplex, positivity, unit_interval, strict_ordering }
}

/// A validated point `(q, p)` of the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    q: Vec<T>,
    p: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Validates and wraps `(q, p)`; the first violated constraint is reported.
    pub fn new(q: Vec<T>, p: Vec<T>) -> Result<Self> {
        let report = validate_feasible(&q, &p);
        if let Some(&c) = report.violations().first() {
            return Err(Error::InvalidParams(c));
        }
        Ok(Self { q, p })
    }

    /// Convenience constructor from `f64` values.
    pub fn from_f64(q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(q.iter().map(|&x| T::of(x)).collect(), p.iter().map(|&x| T::of(x)).collect())
    }

    /// Number of modes `s`.
    pub fn modes(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    /// Parameters stacked as `(q_1..q_s, p_1..p_s)`.
    pub fn stacked(&self) -> Vec<T> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            q: self.q.iter().map(|x| U::of(x.to_f64_lossy())).collect(),
            p: self.p.iter().map(|x| U::of(x.to_f64_lossy())).collect(),
        }
    }

    pub fn forward_moments(&self, k: usize) -> MomentVector<T> {
        MomentVector(layer_moments(&self.q, &self.p, k))
    }

    /// Power sums with `a_1` set to exactly one, which validated `q` sums to.
    pub fn power_sums(&self, len: usize) -> PowerSums<T> {
        let mut a = raw_power_sums(&self.q, &self.p, len);
        if let Some(first) = a.first_mut() {
            *first = T::one();
        }
        PowerSums(a)
    }
}

/// Layer moments `m_1..m_k` for arbitrary `(q, p)`, without validation.
pub fn layer_moments<T: Scalar>(q: &[T], p: &[T], k: usize) -> Vec<T> {
    assert_eq!(q.len(), p.len(), "q and p lengths differ");
    let mut m = vec![T::zero(); k];
    for (&qr, &pr) in q.iter().zip(p) {
        let mut pow = T::one();
        for mi in m.iter_mut() {
            *mi += (T::one() - pr) * pow * qr;
            pow *= pr;
        }
    }
    m
}

/// Power sums `a_1..a_len` for arbitrary `(q, p)`, without validation.
pub fn raw_power_sums<T: Scalar>(q: &[T], p: &[T], len: usize) -> Vec<T> {
    assert_eq!(q.len(), p.len(), "q and p lengths differ");
    let mut a = vec![T::zero(); len];
    for (&qr, &pr) in q.iter().zip(p) {
        let mut pow = T::one();
        for ai in a.iter_mut() {
            *ai += qr * pow;
            pow *= pr;
        }
    }
    a
}

/// Expected absorbed counts per layer, divided by `lambda * t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector<T>(pub Vec<T>);

impl<T> MomentVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Generalized power sums `a_i = sum_r q_r p_r^(i-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums<T>(pub Vec<T>);

impl<T> PowerSums<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

/// Beam intensity, replication count and detector depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Expected beam count per replication (`lambda * t`).
    pub lambda_t: f64,
    /// Number of replications.
    pub n: usize,
    /// Number of detector layers.
    pub k: usize,
}

impl BeamConfig {
    /// `lambda_t` may be zero (an empty beam); it must be finite and non-negative.
    pub fn new(lambda_t: f64, n: usize, k: usize) -> Result<Self> {
        if !lambda_t.is_finite() || lambda_t < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda_t must be finite and non-negative, got {lambda_t}")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(Self { lambda_t, n, k })
    }

    /// Layers needed to identify `s` modes.
    pub fn required_layers(s: usize) -> usize {
        2 * s - 1
    }
}
