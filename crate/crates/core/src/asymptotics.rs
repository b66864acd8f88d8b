//! Delta-method asymptotics of the closed-form estimator.
//!
//! With `F_i(q, p, u) = sum_r q_r p_r^(i-1) - u_i` for `i = 1..2s`, the
//! solution map `u -> (q, p)` has derivative `J^{-1}` where `J` is the
//! Jacobian of `F` in `(q, p)` (the `-J^{-1}` from the implicit function
//! theorem meets `dF/du = -I`). The tail sums `a_2..a_{2s}` are affine in the
//! layer means, which are independent Poisson averages with variance
//! `m_i / (n lambda_t)`; pushing that covariance through the derivative (minus
//! its first column, since `a_1 = 1` is fixed) gives the limit covariance of
//! `sqrt(n) ((q_hat, p_hat) - (q, p))`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix, MatrixRecord};
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::solver::MomentSolution;

/// Jacobian of the power-sum system in `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemJacobian<T> {
    pub matrix: Matrix<T>,
}

pub fn jacobian<T: Scalar>(params: &ModelParams<T>) -> SystemJacobian<T> {
    let s = params.modes();
    let (q, p) = (params.q(), params.p());
    let matrix = Matrix::from_fn(2 * s, 2 * s, |i, col| {
        if col < s {
            p[col].powi(i as u32)
        } else if i == 0 {
            T::zero()
        } else {
            let r = col - s;
            T::from_usize(i) * q[r] * p[r].powi(i as u32 - 1)
        }
    });
    SystemJacobian { matrix }
}

fn singular_jacobian_reason<T: Scalar>(params: &ModelParams<T>) -> String {
    let (q, p) = (params.q(), params.p());
    let (mut pair, mut gap) = ((0, 0), f64::INFINITY);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let g = (p[i] - p[j]).abs().to_f64_lossy();
            if g < gap {
                gap = g;
                pair = (i, j);
            }
        }
    }
    let (r, qmin) = q
        .iter()
        .enumerate()
        .map(|(r, x)| (r, x.to_f64_lossy()))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    if p.len() > 1 && gap <= qmin {
        format!("p_{} and p_{} nearly coincide (gap {gap:e})", pair.0 + 1, pair.1 + 1)
    } else {
        format!("q_{} nearly vanishes ({qmin:e})", r + 1)
    }
}

/// Implicit derivatives `dpsi = J^{-1}`; column `j` solves `J x = e_j`.
pub fn implicit_derivatives<T: Scalar>(params: &ModelParams<T>) -> Result<Matrix<T>> {
    let j = jacobian(params).matrix;
    let n = j.rows();
    let lu = j.lu();
    let singular = || Error::SingularJacobian(singular_jacobian_reason(params));
    if lu.is_singular() {
        return Err(singular());
    }
    let mut dpsi = Matrix::zeros(n, n);
    for col in 0..n {
        let mut rhs = vec![T::zero(); n];
        rhs[col] = T::one();
        let x = lu.solve(&rhs).ok_or_else(singular)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        for (row, v) in x.into_iter().enumerate() {
            dpsi[(row, col)] = v;
        }
    }
    Ok(dpsi)
}

/// Delta-method covariance and its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport<T> {
    /// Limit covariance of `sqrt(n)((q_hat, p_hat) - (q, p))`, `2s x 2s`.
    pub sigma_sq: Matrix<T>,
    /// Limit covariance of `sqrt(n)(a_hat_2..a_hat_2s)`, `(2s-1) x (2s-1)`.
    pub sigma_a: Matrix<T>,
    pub dpsi: Matrix<T>,
    pub lambda_t: f64,
}

impl<T: Scalar> CovarianceReport<T> {
    pub fn modes(&self) -> usize {
        self.sigma_sq.rows() / 2
    }

    /// Upper-left `s x s` block, the covariance of the `q` components.
    pub fn sigma_qq(&self) -> Matrix<T> {
        let s = self.modes();
        self.sigma_sq.submatrix(0, 0, s, s)
    }

    pub fn to_record(&self) -> CovarianceRecord {
        CovarianceRecord {
            dim: self.sigma_sq.rows(),
            lambda_t: self.lambda_t,
            sigma_sq: (&self.sigma_sq).into(),
            sigma_a: (&self.sigma_a).into(),
            dpsi: (&self.dpsi).into(),
        }
    }
}

/// JSON form of [`CovarianceReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRecord {
    pub dim: usize,
    pub lambda_t: f64,
    pub sigma_sq: MatrixRecord,
    pub sigma_a: MatrixRecord,
    pub dpsi: MatrixRecord,
}

/// Relative tolerance on negative eigenvalues of a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;

/// Checks symmetric positive semidefiniteness up to `PSD_TOL * trace`.
pub fn check_psd<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    let (vals, _) = symmetric_eigen(m);
    let trace = m.trace();
    let min = vals.iter().copied().fold(T::of(f64::INFINITY), T::min);
    if min < -T::of(PSD_TOL) * trace.abs() {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min.to_f64_lossy(), trace: trace.to_f64_lossy() });
    }
    Ok(())
}

/// `R` with `R R^T = m`, clipping eigenvalues in `[-PSD_TOL * trace, 0)` to zero.
pub fn psd_factor<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    check_psd(m)?;
    let (vals, vecs) = symmetric_eigen(m);
    let n = m.rows();
    Ok(Matrix::from_fn(n, n, |i, j| vecs[(i, j)] * vals[j].max(T::zero()).sqrt()))
}

/// Covariance of the estimator at `params` for beam size `lambda_t`.
pub fn asymptotic_covariance<T: Scalar>(params: &ModelParams<T>, lambda_t: f64) -> Result<CovarianceReport<T>> {
    if !(lambda_t > 0.0) || !lambda_t.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda_t must be positive, got {lambda_t}")));
    }
    let s = params.modes();
    let k = 2 * s - 1;
    let dpsi = implicit_derivatives(params)?;
    let lt = T::of(lambda_t);
    let m: Vec<T> = params.forward_moments(k).0.into_iter().map(|x| x / lt).collect();
    let sigma_m = Matrix::diagonal(&m);
    let ones = Matrix::from_fn(k, k, |i, j| if j <= i { T::one() } else { T::zero() });
    let sigma_a = ones.matmul(&sigma_m).matmul(&ones.transpose());
    let reduced = dpsi.without_column(0);
    let raw = reduced.matmul(&sigma_a).matmul(&reduced.transpose());
    let half = T::of(0.5);
    let sigma_sq = Matrix::from_fn(2 * s, 2 * s, |i, j| (raw[(i, j)] + raw[(j, i)]) * half);
    check_psd(&sigma_sq)?;
    Ok(CovarianceReport { sigma_sq, sigma_a, dpsi, lambda_t })
}

/// `det J / (prod q_r * prod_{i<j} (p_i - p_j)^4)`, a constant depending only on `s`.
pub fn det_factorization_ratio<T: Scalar>(params: &ModelParams<T>) -> T {
    let det = jacobian(params).matrix.determinant();
    let (q, p) = (params.q(), params.p());
    let mut denom = q.iter().fold(T::one(), |acc, &x| acc * x);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            denom *= (p[i] - p[j]).powi(4);
        }
    }
    det / denom
}

/// Two-sided Wald interval for one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl WaldInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Standard normal quantile `z` with `P(|Z| <= z) = level`.
pub fn two_sided_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Intervals `theta_c +- z sqrt(sigma_cc / n)` for every component of `(q, p)`.
pub fn wald_intervals<T: Scalar>(
    solution: &MomentSolution<T>,
    report: &CovarianceReport<T>,
    n: usize,
    level: f64,
) -> Result<Vec<WaldInterval>> {
    two_sided_quantile(level)?;
    if !solution.feasible {
        return Err(Error::Infeasible);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    let est: Vec<f64> = solution.stacked().iter().map(|x| x.to_f64_lossy()).collect();
    wald_intervals_at(&est, report, n, level)
}

/// Intervals around an arbitrary center, e.g. a clamped estimate.
pub fn wald_intervals_at<T: Scalar>(
    center: &[f64],
    report: &CovarianceReport<T>,
    n: usize,
    level: f64,
) -> Result<Vec<WaldInterval>> {
    let z = two_sided_quantile(level)?;
    if center.len() != report.sigma_sq.rows() {
        return Err(Error::Dimension(format!(
            "estimate has {} components, covariance has {}",
            center.len(),
            report.sigma_sq.rows()
        )));
    }
    Ok(center
        .iter()
        .enumerate()
        .map(|(c, &theta)| {
            let half = z * (report.sigma_sq[(c, c)].to_f64_lossy().max(0.0) / n as f64).sqrt();
            WaldInterval { estimate: theta, lower: theta - half, upper: theta + half }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::raw_power_sums;
    use crate::solver::solve_power_sums;

    fn reference() -> ModelParams<f64> {
        ModelParams::new(vec![0.6, 0.4], vec![0.7, 0.3]).unwrap()
    }

    #[test]
    fn single_mode_jacobian() {
        let p = ModelParams::new(vec![1.0], vec![0.5]).unwrap();
        let j = jacobian(&p).matrix;
        assert_eq!(j.as_slice(), &[1.0, 0.0, 0.5, 1.0]);
        assert_eq!(j.determinant(), 1.0);
        assert!((det_factorization_ratio(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn first_row_is_indicator_of_q_block() {
        let j = jacobian(&reference()).matrix;
        assert_eq!(j.row(0), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let params = ModelParams::new(vec![0.5, 0.3, 0.2], vec![0.8, 0.5, 0.2]).unwrap();
        let s = 3;
        let j = jacobian(&params).matrix;
        let x0 = params.stacked();
        let h = 1e-6;
        let f = |x: &[f64]| raw_power_sums(&x[..s], &x[s..], 2 * s);
        for col in 0..2 * s {
            let mut xp = x0.clone();
            let mut xm = x0.clone();
            xp[col] += h;
            xm[col] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            for row in 0..2 * s {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!((fd - j[(row, col)]).abs() <= 1e-5, "({row},{col})");
            }
        }
    }

    #[test]
    fn dpsi_is_inverse_jacobian() {
        let params = reference();
        let j = jacobian(&params).matrix;
        let d = implicit_derivatives(&params).unwrap();
        let prod = j.matmul(&d);
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((prod[(r, c)] - want).abs() <= 1e-10);
            }
        }
        let one = ModelParams::new(vec![1.0], vec![0.5]).unwrap();
        let d = implicit_derivatives(&one).unwrap();
        let expected = [1.0, 0.0, -0.5, 1.0];
        for (a, b) in d.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dpsi_matches_finite_differences_of_solver() {
        let params = reference();
        let dpsi = implicit_derivatives(&params).unwrap();
        let u = raw_power_sums(params.q(), params.p(), 4);
        let h = 1e-6;
        for col in 0..4 {
            let mut up = u.clone();
            let mut um = u.clone();
            up[col] += h;
            um[col] -= h;
            let sp = solve_power_sums(&up, 2).unwrap().stacked();
            let sm = solve_power_sums(&um, 2).unwrap().stacked();
            for row in 0..4 {
                let fd = (sp[row] - sm[row]) / (2.0 * h);
                assert!((fd - dpsi[(row, col)]).abs() <= 1e-4, "({row},{col}) fd {fd} vs {}", dpsi[(row, col)]);
            }
        }
    }

    #[test]
    fn single_mode_covariance_by_hand() {
        let p = 0.5;
        let lt = 250.0;
        let params = ModelParams::new(vec![1.0], vec![p]).unwrap();
        let cov = asymptotic_covariance(&params, lt).unwrap();
        assert!(cov.sigma_sq[(0, 0)].abs() < 1e-15);
        assert!((cov.sigma_sq[(1, 1)] - (1.0 - p) / lt).abs() < 1e-15);
    }

    #[test]
    fn covariance_is_symmetric_psd_and_scales_inversely() {
        let params = reference();
        let a = asymptotic_covariance(&params, 1000.0).unwrap();
        let b = asymptotic_covariance(&params, 2000.0).unwrap();
        assert!(a.sigma_sq.asymmetry() <= 1e-10);
        check_psd(&a.sigma_sq).unwrap();
        for (x, y) in a.sigma_sq.as_slice().iter().zip(b.sigma_sq.as_slice()) {
            assert!((x - 2.0 * y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
        assert!(asymptotic_covariance(&params, 0.0).is_err());
    }

    #[test]
    fn psd_check_rejects_indefinite() {
        let m = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_psd(&m), Err(Error::NotPositiveSemidefinite { .. })));
        let f = psd_factor(&Matrix::from_row_major(2, 2, vec![1.0, -1.0, -1.0, 1.0])).unwrap();
        let back = f.matmul(&f.transpose());
        assert!((back[(0, 1)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_is_constant_and_determinant_vanishes_quartically() {
        let a = det_factorization_ratio(&reference());
        let b = det_factorization_ratio(&ModelParams::new(vec![0.2, 0.8], vec![0.9, 0.05]).unwrap());
        assert!(((a - b) / a).abs() < 1e-8);

        let gaps: [f64; 4] = [0.1, 0.05, 0.02, 0.01];
        let pts: Vec<(f64, f64)> = gaps
            .iter()
            .map(|&g| {
                let params = ModelParams::<f64>::new(vec![0.5, 0.5], vec![0.6, 0.6 - g]).unwrap();
                (g.ln(), jacobian(&params).matrix.determinant().abs().ln())
            })
            .collect();
        let slope = (pts[3].1 - pts[0].1) / (pts[3].0 - pts[0].0);
        assert!((slope - 4.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn wald_interval_properties() {
        let params = reference();
        let u = raw_power_sums(params.q(), params.p(), 4);
        let sol = solve_power_sums(&u, 2).unwrap();
        let cov = asymptotic_covariance(&params, 1000.0).unwrap();
        assert_eq!(wald_intervals(&sol, &cov, 100, 0.0).unwrap_err(), Error::InvalidLevel(0.0));
        assert!(wald_intervals(&sol, &cov, 100, 1.0).is_err());
        let w1 = wald_intervals(&sol, &cov, 100, 0.95).unwrap();
        let w4 = wald_intervals(&sol, &cov, 400, 0.95).unwrap();
        for (a, b) in w1.iter().zip(&w4) {
            assert!((a.width() - 2.0 * b.width()).abs() < 1e-12);
            assert!(a.contains(a.estimate));
        }
        let mut bad = sol.clone();
        bad.feasible = false;
        assert_eq!(wald_intervals(&bad, &cov, 100, 0.95).unwrap_err(), Error::Infeasible);
        assert!((two_sided_quantile(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn singular_jacobian_names_the_pair() {
        // valid parameters can still yield a numerically singular J only at
        // extreme settings; the diagnostic text is checked directly
        let params = ModelParams::new(vec![0.5, 0.5], vec![0.6, 0.6 - 2e-10]).unwrap();
        let reason = singular_jacobian_reason(&params);
        assert!(reason.contains("p_1 and p_2"), "{reason}");
    }
}
