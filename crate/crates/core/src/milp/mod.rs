//! Solver-agnostic mixed-integer linear programming layer.
//!
//! [`Model`] is a plain intermediate representation (variables, linear
//! constraints, a maximization objective). It can be solved by the built-in
//! branch-and-bound solver ([`solve_branch_and_bound`]), relaxed and solved
//! as an LP ([`solve_lp_relaxation`]), or exported as an MPS file for an
//! external solver ([`export_mps`]).

mod bb;
mod mps;
mod presolve;
mod simplex;

pub use bb::{solve_branch_and_bound, solve_lp_relaxation};
pub use mps::{export_mps, import_solution, write_mps};
pub use presolve::{presolve, PresolveOutcome, PresolvedModel};
pub use simplex::{solve_bounded_lp, LpOutcome, LpStatus};

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("variable name collision after sanitization: {0}")]
    NameCollision(String),
    #[error("solution import: {0}")]
    SolutionImport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone)]
pub struct VarDef {
    pub id: usize,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
    /// Branching preference: higher bands branch first (0 = default).
    pub branch_priority: i32,
}

/// Linear expression; construction merges duplicate variable ids.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    /// Sorted by variable id, ids unique, coefficients nonzero.
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut e = Self::new();
        for (id, coef) in terms {
            e.add(id, coef);
        }
        e
    }

    /// Adds `coef * var`, merging with any existing term.
    pub fn add(&mut self, var: usize, coef: f64) -> &mut Self {
        match self.terms.binary_search_by_key(&var, |t| t.0) {
            Ok(pos) => {
                self.terms[pos].1 += coef;
                if self.terms[pos].1 == 0.0 {
                    self.terms.remove(pos);
                }
            }
            Err(pos) => {
                if coef != 0.0 {
                    self.terms.insert(pos, (var, coef));
                }
            }
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// Evaluates the expression on a full assignment.
    pub fn value(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(id, c)| c * values[id]).sum::<f64>()
    }

    /// Coefficient of `var` (zero when absent).
    pub fn coeff(&self, var: usize) -> f64 {
        match self.terms.binary_search_by_key(&var, |t| t.0) {
            Ok(pos) => self.terms[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite() && self.terms.iter().all(|&(_, c)| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
    pub label: String,
}

/// A maximization MILP.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub vars: Vec<VarDef>,
    pub constraints: Vec<Constraint>,
    pub objective: LinExpr,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        kind: VarKind,
        lower: f64,
        upper: f64,
        name: impl Into<String>,
    ) -> usize {
        let id = self.vars.len();
        self.vars.push(VarDef { id, kind, lower, upper, name: name.into(), branch_priority: 0 });
        id
    }

    pub fn set_branch_priority(&mut self, var: usize, priority: i32) {
        self.vars[var].branch_priority = priority;
    }

    pub fn binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(VarKind::Binary, 0.0, 1.0, name)
    }

    pub fn continuous(&mut self, lower: f64, upper: f64, name: impl Into<String>) -> usize {
        self.add_var(VarKind::Continuous, lower, upper, name)
    }

    pub fn add_constraint(
        &mut self,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
        label: impl Into<String>,
    ) {
        self.constraints.push(Constraint { expr, sense, rhs, label: label.into() });
    }

    pub fn n_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.id != i {
                return Err(MilpError::InvalidModel(format!(
                    "variable ids must be dense and ordered; found {} at slot {i}",
                    v.id
                )));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(MilpError::InvalidModel(format!(
                    "variable {} has invalid bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(MilpError::InvalidModel(format!(
                    "binary variable {} must have bounds within [0,1]",
                    v.name
                )));
            }
        }
        if !self.objective.is_finite() {
            return Err(MilpError::InvalidModel("objective has non-finite coefficients".into()));
        }
        let check_expr = |e: &LinExpr, what: &str| -> Result<(), MilpError> {
            for &(id, c) in &e.terms {
                if id >= self.vars.len() {
                    return Err(MilpError::InvalidModel(format!(
                        "{what} references undeclared variable {id}"
                    )));
                }
                if !c.is_finite() {
                    return Err(MilpError::InvalidModel(format!(
                        "{what} has a non-finite coefficient on variable {id}"
                    )));
                }
            }
            Ok(())
        };
        check_expr(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            check_expr(&c.expr, &format!("constraint {i} ({})", c.label))?;
            if !c.rhs.is_finite() || !c.expr.constant.is_finite() {
                return Err(MilpError::InvalidModel(format!(
                    "constraint {i} ({}) has a non-finite rhs or constant",
                    c.label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Proven optimal (gap zero within tolerances).
    Optimal,
    /// Stopped because the relative gap target was met.
    GapReached,
    Infeasible,
    Unbounded,
    /// Stopped on a node or time limit; `objective` holds the best incumbent
    /// found, if any.
    Limit,
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub nodes: usize,
    pub simplex_iterations: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    /// One value per model variable; empty when no incumbent exists.
    pub values: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    /// (best_bound - objective) / max(|objective|, eps), for maximization.
    pub gap: f64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn has_values(&self) -> bool {
        !self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Stop when (bound - incumbent)/max(|incumbent|, eps) falls to this.
    pub gap_target: f64,
    pub time_limit: Option<std::time::Duration>,
    pub node_limit: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { gap_target: 0.0, time_limit: None, node_limit: None }
    }
}

pub(crate) fn relative_gap(bound: f64, objective: f64) -> f64 {
    (bound - objective) / objective.abs().max(crate::tol::GAP_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linexpr_merges_duplicates() {
        let mut e = LinExpr::new();
        e.add(3, 1.5).add(1, 2.0).add(3, 0.5);
        assert_eq!(e.terms, vec![(1, 2.0), (3, 2.0)]);
        e.add(1, -2.0);
        assert_eq!(e.terms, vec![(3, 2.0)]);
        let f = LinExpr::from_terms([(2, 1.0), (0, 1.0), (2, -1.0)]);
        assert_eq!(f.terms, vec![(0, 1.0)]);
    }

    #[test]
    fn linexpr_evaluates() {
        let mut e = LinExpr::new();
        e.add(0, 2.0).add(2, -1.0).add_constant(5.0);
        assert_eq!(e.value(&[1.0, 9.0, 3.0]), 4.0);
    }

    #[test]
    fn model_validation_catches_errors() {
        let mut m = Model::new();
        let x = m.binary("x");
        m.add_constraint(LinExpr::from_terms([(x, 1.0)]), Sense::Le, 1.0, "ok");
        m.validate().unwrap();

        let mut bad = m.clone();
        bad.add_constraint(LinExpr::from_terms([(7, 1.0)]), Sense::Le, 1.0, "dangling");
        assert!(bad.validate().is_err());

        let mut bad = m.clone();
        bad.vars[0].lower = 2.0;
        assert!(bad.validate().is_err());

        let mut bad = m;
        bad.objective.add(0, f64::NAN);
        assert!(bad.validate().is_err());
    }
}
