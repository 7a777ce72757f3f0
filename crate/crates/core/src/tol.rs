//! Numeric tolerances shared across the solver and the planners.
//!
//! All residual checks in the crate reference these constants so that the
//! solver, the plan decoder and the independent feasibility checker agree on
//! what "satisfied" means.

/// Primal feasibility tolerance for the LP engine, applied relative to
/// `max(1, |rhs|)` of each row.
pub const FEASIBILITY_TOL: f64 = 1e-7;

/// A binary variable counts as integral when within this distance of 0 or 1.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Residual tolerance used by the independent plan feasibility checker.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Reduced-cost threshold below which a column is not eligible to enter the
/// basis.
pub const REDUCED_COST_TOL: f64 = 1e-9;

/// Pivot elements smaller than this are rejected in the ratio tests.
pub const PIVOT_TOL: f64 = 1e-9;

/// Denominator guard for relative-gap computations.
pub const GAP_EPS: f64 = 1e-9;
