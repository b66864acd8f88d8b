//! Closed-form solution of the power-sum system
//!
//! ```text
//! sum_r q_r p_r^(i-1) = a_i,   i = 1..2s
//! ```
//!
//! The generating function `sum_i a_i theta^(i-1)` equals the rational
//! function `phi(theta) = N(theta) / (1 + c_1 theta + ... + c_s theta^s)`.
//! The denominator coefficients come from a Toeplitz-ordered Hankel solve,
//! the nodes `p_r` are the reciprocals of its roots (found as companion
//! matrix eigenvalues) and the weights `q_r` are the partial-fraction
//! residues of `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number_1, real_matrix_eigenvalues, Matrix};
use crate::model::{validate_feasible, ModelParams, MIN_P_GAP};
use crate::scalar::Scalar;
use crate::simulate::SufficientStats;

/// Condition numbers at or above this are treated as singular. The
/// determinant alone is not a usable test: for well separated nodes it still
/// shrinks like the squared Vandermonde determinant.
pub const MAX_CONDITION: f64 = 1e12;
/// Imaginary parts below `IMAG_TOL * (1 + |re|)` are discarded.
pub const IMAG_TOL: f64 = 1e-7;
/// Minimum pairwise separation between nodes.
pub const NODE_SEPARATION: f64 = 1e-6;

/// The matrices `C(u)` and `D(u)` together with the vector slices they act on.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelSystem<T> {
    pub s: usize,
    /// `C[i][j] = u_{s+i-j}` (1-based).
    pub c: Matrix<T>,
    /// Strictly lower triangular, `D[i][j] = u_{i-j}` for `i > j`.
    pub d: Matrix<T>,
    /// `(u_{s+1}, ..., u_{2s})`
    pub rhs_tail: Vec<T>,
    /// `(u_1, ..., u_s)`
    pub head: Vec<T>,
}

impl<T: Scalar> HankelSystem<T> {
    /// `C` with its column order reversed, i.e. the symmetric Hankel matrix
    /// `H[i][j] = u_{i+j-1}`.
    pub fn hankel_form(&self) -> Matrix<T> {
        let s = self.s;
        Matrix::from_fn(s, s, |i, j| self.c[(i, s - 1 - j)])
    }
}

pub fn build_hankel<T: Scalar>(u: &[T], s: usize) -> Result<HankelSystem<T>> {
    if s == 0 {
        return Err(Error::Dimension("number of modes must be positive".into()));
    }
    if u.len() < 2 * s {
        return Err(Error::Dimension(format!("need at least {} power sums for s = {s}, got {}", 2 * s, u.len())));
    }
    let c = Matrix::from_fn(s, s, |i, j| u[s + i - j - 1]);
    let d = Matrix::from_fn(s, s, |i, j| if i > j { u[i - j - 1] } else { T::zero() });
    Ok(HankelSystem { s, c, d, rhs_tail: u[s..2 * s].to_vec(), head: u[..s].to_vec() })
}

/// `phi(theta) = (d_1 + d_2 theta + ... + d_s theta^(s-1)) / (1 + c_1 theta + ... + c_s theta^s)`
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn<T> {
    pub c: Vec<T>,
    pub d: Vec<T>,
}

impl<T: Scalar> RationalFn<T> {
    pub fn numerator(&self, theta: T) -> T {
        self.d.iter().rev().fold(T::zero(), |acc, &x| acc * theta + x)
    }

    pub fn denominator(&self, theta: T) -> T {
        self.c.iter().rev().fold(T::zero(), |acc, &x| acc * theta + x) * theta + T::one()
    }

    pub fn eval(&self, theta: T) -> T {
        self.numerator(theta) / self.denominator(theta)
    }
}

/// Determinant and conditioning of `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HankelConditioning {
    pub det: f64,
    pub cond: f64,
}

pub fn hankel_conditioning<T: Scalar>(sys: &HankelSystem<T>) -> HankelConditioning {
    HankelConditioning { det: sys.c.determinant().to_f64_lossy(), cond: condition_number_1(&sys.c) }
}

/// Solves for the denominator and numerator coefficients.
///
/// The denominator annihilates the moment recurrence
/// `u_{s+i} + c_1 u_{s+i-1} + ... + c_s u_i = 0`, so `c = -C^{-1} u_tail`
/// and `d = u_head + D c`.
pub fn solve_coefficients<T: Scalar>(sys: &HankelSystem<T>) -> Result<RationalFn<T>> {
    let lu = sys.c.lu();
    let det = lu.determinant();
    let cond = condition_number_1(&sys.c);
    let singular = lu.is_singular() || det == T::zero() || !(cond < MAX_CONDITION);
    if singular {
        return Err(Error::SingularHankel { det: det.to_f64_lossy(), cond });
    }
    let sol = lu
        .solve(&sys.rhs_tail)
        .ok_or(Error::SingularHankel { det: det.to_f64_lossy(), cond })?;
    let c: Vec<T> = sol.into_iter().map(|x| -x).collect();
    let dc = sys.d.matvec(&c);
    let d = sys.head.iter().zip(dc).map(|(&h, x)| h + x).collect();
    Ok(RationalFn { c, d })
}

/// Nodes with the magnitude of the largest imaginary part that was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Nodes<T> {
    /// Descending.
    pub z: Vec<T>,
    pub max_imag_discarded: f64,
}

/// Monic polynomial `z^s + c_1 z^(s-1) + ... + c_s` and its derivative.
fn reversed_poly<T: Scalar>(c: &[T], z: T) -> (T, T) {
    let mut val = T::one();
    let mut der = T::zero();
    for &ci in c {
        der = der * z + val;
        val = val * z + ci;
    }
    (val, der)
}

/// Reciprocal roots of `1 + c_1 theta + ... + c_s theta^s`, descending.
///
/// These are the roots of the reversed monic polynomial, computed as the
/// eigenvalues of its companion matrix and polished by Newton steps.
pub fn denominator_roots<T: Scalar>(c: &[T]) -> Result<Nodes<T>> {
    let s = c.len();
    if s == 0 {
        return Err(Error::Dimension("empty denominator".into()));
    }
    let scale = c.iter().fold(T::one(), |acc, x| acc.max(x.abs()));
    let leading = c[s - 1];
    if leading.abs() <= T::tolerance(1e-14) * scale {
        return Err(Error::DegenerateDegree { leading: leading.to_f64_lossy() });
    }
    let companion = Matrix::from_fn(s, s, |i, j| {
        if i == 0 {
            -c[j]
        } else if i == j + 1 {
            T::one()
        } else {
            T::zero()
        }
    });
    let eig = real_matrix_eigenvalues(&companion).ok_or(Error::RootFinding)?;
    let imag_tol = T::of(IMAG_TOL);
    let mut max_imag = T::zero();
    let mut worst_violation = None;
    let mut z = Vec::with_capacity(s);
    for (re, im) in eig {
        let im = im.abs();
        if im > imag_tol * (T::one() + re.abs()) {
            worst_violation = Some(worst_violation.map_or(im, |w: T| w.max(im)));
        }
        max_imag = max_imag.max(im);
        z.push(polish_root(c, re));
    }
    if let Some(w) = worst_violation {
        return Err(Error::ComplexRoots { max_imag: w.to_f64_lossy() });
    }
    z.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Nodes { z, max_imag_discarded: max_imag.to_f64_lossy() })
}

fn polish_root<T: Scalar>(c: &[T], mut z: T) -> T {
    let (mut val, _) = reversed_poly(c, z);
    for _ in 0..4 {
        let (v, d) = reversed_poly(c, z);
        if d == T::zero() || v == T::zero() {
            break;
        }
        let next = z - v / d;
        let (nv, _) = reversed_poly(c, next);
        if nv.abs() < val.abs() {
            z = next;
            val = nv;
        } else {
            break;
        }
    }
    z
}

fn min_gap<T: Scalar>(z: &[T]) -> Option<T> {
    let mut best: Option<T> = None;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let g = (z[i] - z[j]).abs();
            best = Some(best.map_or(g, |b| b.min(g)));
        }
    }
    best
}

/// Weights `y` of the representation `phi(theta) = sum_r y_r / (1 - z_r theta)`.
///
/// `y_r = N(1/z_r) / prod_{j != r} (1 - z_j / z_r)`, evaluated in the
/// equivalent form `z_r^(s-1) N(1/z_r) / prod_{j != r} (z_r - z_j)`.
pub fn partial_fraction_residues<T: Scalar>(f: &RationalFn<T>, z: &[T]) -> Result<Vec<T>> {
    let s = z.len();
    if f.d.len() != s {
        return Err(Error::Dimension(format!("numerator has {} coefficients but there are {s} nodes", f.d.len())));
    }
    if let Some(g) = min_gap(z) {
        if g < T::of(NODE_SEPARATION) {
            return Err(Error::IllSeparatedNodes { min_gap: g.to_f64_lossy() });
        }
    }
    let y = (0..s)
        .map(|r| {
            let zr = z[r];
            let num = f.d.iter().fold(T::zero(), |acc, &d| acc * zr + d);
            let den = (0..s).filter(|&j| j != r).fold(T::one(), |acc, j| acc * (zr - z[j]));
            num / den
        })
        .collect();
    Ok(y)
}

/// Numerical diagnostics attached to every solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub det_c: f64,
    pub cond_c: f64,
    pub max_imag_discarded: f64,
    /// Smallest pairwise node gap; absent for a single mode.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub root_separation: Option<f64>,
}

/// Raw solution `(y, z)` of the moment system, ordered by descending `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSolution<T> {
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub feasible: bool,
    pub coefficients: RationalFn<T>,
    pub diagnostics: SolverDiagnostics,
}

impl<T: Scalar> MomentSolution<T> {
    pub fn modes(&self) -> usize {
        self.y.len()
    }

    /// Stacked `(y_1..y_s, z_1..z_s)`.
    pub fn stacked(&self) -> Vec<T> {
        self.y.iter().chain(&self.z).copied().collect()
    }

    /// The solution as validated parameters, if it is feasible.
    pub fn params(&self) -> Result<ModelParams<T>> {
        if !self.feasible {
            return Err(Error::Infeasible);
        }
        ModelParams::new(self.y.clone(), self.z.clone())
    }
}

/// Solves the power-sum system from `u = (u_1, ..., u_{2s})`.
pub fn solve_power_sums<T: Scalar>(u: &[T], s: usize) -> Result<MomentSolution<T>> {
    if u.len() != 2 * s {
        return Err(Error::Dimension(format!(
            "{s} modes need k = {} layers ({} power sums), got {} power sums",
            2 * s - 1,
            2 * s,
            u.len()
        )));
    }
    let sys = build_hankel(u, s)?;
    let cond = hankel_conditioning(&sys);
    let f = solve_coefficients(&sys)?;
    let nodes = denominator_roots(&f.c)?;
    let y = partial_fraction_residues(&f, &nodes.z)?;
    let feasible = validate_feasible(&y, &nodes.z).is_feasible() && {
        let total: T = y.iter().copied().sum();
        (total - T::one()).abs() <= T::tolerance(1e-8)
    };
    let diagnostics = SolverDiagnostics {
        det_c: cond.det,
        cond_c: cond.cond,
        max_imag_discarded: nodes.max_imag_discarded,
        root_separation: min_gap(&nodes.z).map(|g| g.to_f64_lossy()),
    };
    Ok(MomentSolution { y, z: nodes.z, feasible, coefficients: f, diagnostics })
}

/// Full pipeline from sufficient statistics; requires `k = 2s - 1`.
pub fn solve_moment_system<T: Scalar>(stats: &SufficientStats, s: usize) -> Result<MomentSolution<T>> {
    if s == 0 || stats.a_hat.len() != 2 * s {
        return Err(Error::Dimension(format!(
            "{s} modes need k = {} layers, data has k = {}",
            (2 * s).saturating_sub(1),
            stats.b_hat.len()
        )));
    }
    let u: Vec<T> = stats.a_hat.iter().map(|&x| T::of(x)).collect();
    solve_power_sums(&u, s)
}

/// Heuristic projection of a raw solution into the parameter space.
///
/// Nodes are clamped into `[eps, 1 - eps]`, pairs re-sorted by descending
/// node, nodes pushed apart to the minimum gap, weights floored at `eps`
/// and renormalized. This is not part of the estimator; it only makes
/// downstream plug-in computations possible for infeasible draws.
pub fn clamp_to_feasible<T: Scalar>(sol: &MomentSolution<T>, eps: f64) -> Result<ModelParams<T>> {
    let eps_t = T::of(eps);
    let hi = T::one() - eps_t;
    let mut pairs: Vec<(T, T)> = sol
        .y
        .iter()
        .zip(&sol.z)
        .map(|(&y, &z)| (y.max(eps_t), z.max(eps_t).min(hi)))
        .collect();
    pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let gap = T::of(MIN_P_GAP.max(eps));
    for i in 1..pairs.len() {
        if pairs[i - 1].1 - pairs[i].1 <= gap {
            pairs[i].1 = pairs[i - 1].1 - gap * T::of(2.0);
        }
    }
    let total: T = pairs.iter().map(|p| p.0).sum();
    let q = pairs.iter().map(|p| p.0 / total).collect();
    let p = pairs.iter().map(|p| p.1).collect();
    ModelParams::new(q, p)
}
