//! Planning toolkit for mm-Wave integrated access and backhaul networks
//! with reconfigurable reflective surfaces.
//!
//! The crate is organised bottom-up:
//! * [`scenario`] — urban instance generation and geometry queries,
//! * [`channel`] — link budgets and capacity tables,
//! * [`milp`] — a small mixed-integer linear programming engine,
//! * [`planners`] — the two network-design formulations, decoding, checking
//!   and cross-evaluation, plus a brute-force reference planner,
//! * [`harness`] — budget-sweep experiments and result emission.

// Index-based loops over parallel arrays are the house style in the numeric
// code; iterator rewrites obscure which axis is being walked.
#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod harness;
pub mod milp;
pub mod planners;
pub mod scenario;
pub mod tol;
