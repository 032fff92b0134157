//! Isotropic curvature model for matrix-gradient updates.
//!
//! The model picks the update `Q` minimizing `-Tr(Q G^T) + E_ζ H(‖Qζ‖)` for a
//! gradient `G`, a convex curvature function `H` and `ζ` uniform on the unit
//! sphere. This crate solves it ([`solver`]), evaluates the sphere expectations
//! it needs ([`sphere`]), checks its structural guarantees ([`theorem_checks`]),
//! estimates `H` from loss remainders ([`probe`]) and compares it with
//! orthogonalized-gradient updates ([`muon`]).

// Negated comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod error;
pub mod io;
pub mod linalg;
pub mod muon;
pub mod numeric;
pub mod probe;
pub mod solver;
pub mod sphere;
pub mod theorem_checks;

pub use curvature::{assumption1_holds, log_grid, CurvatureSpec, KinkParams, TabulatedCurve};
pub use error::{Error, Result};
pub use linalg::{
    msgn_exact, svd_compact, trace_inner, von_neumann_bound, DenseMatrix, SvdFactors,
};
pub use muon::{
    compare_one_step, msgn_newton_schulz, ComparisonResult, NsCoefficients, NsConfig, UpdateRule,
};
pub use numeric::Estimate;
pub use probe::{fit_exponent, probe, probe_oracle, OracleSpec, ProbeConfig, ProbeReport};
pub use solver::{
    homogenization_report, solve, solve_generic, solve_kink, solve_quadratic,
    solve_quartic_fixed_point, HomogenizationReport, ModelProblem, SolverOptions, SolverPath,
    SpectrumSolution,
};
pub use sphere::{SphereExpectation, SphereSampler};
pub use theorem_checks::{alignment_gap, converse_gap, kink_certificate, KinkCertificate};
