//! Numerical tolerances and solver defaults, kept in one place so that tests
//! and the acceptance suite refer to the same numbers as the solvers.

/// Relative accuracy target of the SVD: reconstruction error is bounded by
/// `SVD_TOL * (1 + ||M||_F)` and factor columns are orthonormal to `SVD_TOL`.
pub const SVD_TOL: f64 = 1e-10;

/// Sweep cap documented for the SVD backend.
pub const SVD_MAX_SWEEPS: usize = 200;

/// Default ALM termination threshold on
/// `||dbeta||^2 / p + ||dL||_F^2 / NT`.
pub const ALM_TOL: f64 = 1e-6;

pub const ALM_MAX_ITERS: usize = 10_000;

/// Feasibility bound checked on converged fits:
/// `||Y - X beta - L - V||_F <= FEASIBILITY_REL * (1 + ||Y||_F)`.
pub const FEASIBILITY_REL: f64 = 1e-3;

/// Largest acceptable condition number of the covariate Gram matrix.
pub const GRAM_MAX_CONDITION: f64 = 1e12;

/// Small quantile-regression subproblem: ADMM tolerance and iteration cap.
/// ADMM only supplies a starting point; the vertex descent that follows
/// finds the exact minimizer, so a loose tolerance and a short cap suffice.
/// Warm-started block problems can stall ADMM well above the tolerance.
pub const QR_TOL: f64 = 1e-3;
pub const QR_MAX_ITERS: usize = 1_000;

/// Default termination threshold for the iterative factor estimator (same
/// criterion as the ALM solver).
pub const ITERATIVE_TOL: f64 = ALM_TOL;
pub const ITERATIVE_MAX_SWEEPS: usize = 500;

/// Orthonormality check for tangent-space projections.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Singular values at or below this fraction of the largest one are
/// treated as zero when reading off the rank of an exactly low-rank matrix.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Default constant in the cone inequality diagnostic.
pub const CONE_CONSTANT: f64 = 1.0;
