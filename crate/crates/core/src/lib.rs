//! Simulation and estimation for multimode Poisson beams observed through a
//! stack of thinning layers.
//!
//! The pipeline runs from model parameters `(q, p)` to replicated layer
//! counts ([`simulate`]), from counts to sufficient statistics, and back to
//! `(q, p)` through a closed-form moment solver ([`solver`]). Delta-method
//! covariances and Wald intervals live in [`asymptotics`]; the decreasing
//! projection of `q` and its limit law in [`isotonic`].
//!
//! Numerical code is generic over [`Scalar`]; `f64` aliases are exported for
//! the common case and [`DoubleDouble`] is available where `f64` rounding of
//! the inputs dominates the error.

pub mod asymptotics;
pub mod error;
pub mod io;
pub mod isotonic;
pub mod linalg;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod stats;
pub mod study;

pub use asymptotics::{
    asymptotic_covariance, det_factorization_ratio, implicit_derivatives, jacobian, wald_intervals, CovarianceRecord,
    CovarianceReport, SystemJacobian, WaldInterval,
};
pub use error::{Error, ErrorClass, Result};
pub use isotonic::{flat_regions, phi_map, project_decreasing, sample_limit_law, FlatPartition, OrderedEstimate, Region};
pub use linalg::{Matrix, MatrixRecord};
pub use model::{validate_feasible, BeamConfig, Constraint, FeasibilityReport, ModelParams, MomentVector, PowerSums};
pub use sampling::RngSeed;
pub use scalar::{DoubleDouble, Scalar};
pub use simulate::{simulate_direct, simulate_mechanistic, sufficient_stats, CountMatrix, SufficientStats};
pub use solver::{
    build_hankel, clamp_to_feasible, denominator_roots, partial_fraction_residues, solve_coefficients, solve_moment_system,
    solve_power_sums, HankelSystem, MomentSolution, RationalFn, SolverDiagnostics,
};
pub use study::{run_study, SimMode, StudyConfig, StudyResult};

pub type ModelParamsF64 = ModelParams<f64>;
pub type ModelParamsF32 = ModelParams<f32>;
pub type ModelParamsDD = ModelParams<DoubleDouble>;
pub type MomentSolutionF64 = MomentSolution<f64>;
pub type MomentSolutionDD = MomentSolution<DoubleDouble>;
pub type CovarianceReportF64 = CovarianceReport<f64>;
pub type MatrixF64 = Matrix<f64>;
