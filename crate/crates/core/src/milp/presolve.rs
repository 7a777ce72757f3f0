//! Root-node presolve: activity-based bound tightening, redundant-row
//! removal and fixed-variable substitution. Deliberately conservative —
//! never rewrites coefficients, only bounds and row membership — so the
//! reduced core maps back to the original model by index bookkeeping alone.

use super::simplex::CoreLp;
use super::{Model, Sense, VarKind};
use crate::tol::INTEGRALITY_TOL;

/// Where an original variable ended up after presolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarDisposition {
    /// Survives as core column `k`.
    Core(usize),
    /// Fixed to the given value (bounds collapsed).
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct PresolvedModel {
    pub core: CoreLp,
    pub orig_to_core: Vec<VarDisposition>,
    pub core_to_orig: Vec<usize>,
    pub core_is_binary: Vec<bool>,
    pub core_lb: Vec<f64>,
    pub core_ub: Vec<f64>,
    /// Objective contribution of fixed variables plus the model constant.
    pub objective_constant: f64,
    /// Original constraint indices that survived into the core rows.
    pub core_rows: Vec<usize>,
}

impl PresolvedModel {
    /// Expands a core solution vector to the full original variable space.
    pub fn restore(&self, core_x: &[f64]) -> Vec<f64> {
        self.orig_to_core
            .iter()
            .map(|d| match *d {
                VarDisposition::Core(k) => core_x[k],
                VarDisposition::Fixed(v) => v,
            })
            .collect()
    }
}

#[derive(Debug)]
pub enum PresolveOutcome {
    Reduced(Box<PresolvedModel>),
    Infeasible,
}

const ACTIVITY_TOL: f64 = 1e-9;
const MAX_PASSES: usize = 12;

/// Signals an emptied variable box / contradictory row.
struct Empty;

/// Runs presolve on a validated model. Only bounds move: binaries are only
/// ever fixed at exactly 0 or 1 (an interior-pinned binary is reported as
/// infeasible instead).
pub fn presolve(model: &Model) -> PresolveOutcome {
    let lb: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let ub: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    presolve_bounded(model, lb, ub)
}

/// Presolve with caller-supplied variable bounds (typically the model
/// bounds plus branching fixes). The reductions keep every integer point
/// inside the given box, so the reduced LP still bounds the subproblem.
pub fn presolve_bounded(model: &Model, lb: Vec<f64>, ub: Vec<f64>) -> PresolveOutcome {
    match presolve_inner(model, lb, ub) {
        Ok(p) => PresolveOutcome::Reduced(Box::new(p)),
        Err(Empty) => PresolveOutcome::Infeasible,
    }
}

/// A constraint as (terms, sense, rhs) with the expression constant folded
/// into the right-hand side.
type Row = (Vec<(usize, f64)>, Sense, f64);

fn presolve_inner(
    model: &Model,
    mut lb: Vec<f64>,
    mut ub: Vec<f64>,
) -> Result<PresolvedModel, Empty> {
    let nv = model.vars.len();
    let is_bin: Vec<bool> =
        model.vars.iter().map(|v| v.kind == VarKind::Binary).collect();
    for j in 0..nv {
        if is_bin[j] && !round_binary_bounds(&mut lb[j], &mut ub[j]) {
            return Err(Empty);
        }
    }

    // Rows as (terms, sense, rhs) with the expression constant folded in.
    let rows: Vec<Row> = model
        .constraints
        .iter()
        .map(|c| (c.expr.terms.clone(), c.sense, c.rhs - c.expr.constant))
        .collect();
    let mut alive: Vec<bool> = vec![true; rows.len()];

    for _pass in 0..MAX_PASSES {
        let mut changed = false;
        for (ri, (terms, sense, rhs)) in rows.iter().enumerate() {
            if !alive[ri] {
                continue;
            }
            let (min_sum, min_inf) = activity(terms, &lb, &ub, true);
            let (max_sum, max_inf) = activity(terms, &lb, &ub, false);
            let min_act = if min_inf > 0 { f64::NEG_INFINITY } else { min_sum };
            let max_act = if max_inf > 0 { f64::INFINITY } else { max_sum };
            let scale = 1.0 + rhs.abs();

            // Row-level conclusions.
            match sense {
                Sense::Le => {
                    if min_act > rhs + ACTIVITY_TOL * scale {
                        return Err(Empty);
                    }
                    if max_act <= rhs + ACTIVITY_TOL * scale {
                        alive[ri] = false;
                        changed = true;
                        continue;
                    }
                }
                Sense::Ge => {
                    if max_act < rhs - ACTIVITY_TOL * scale {
                        return Err(Empty);
                    }
                    if min_act >= rhs - ACTIVITY_TOL * scale {
                        alive[ri] = false;
                        changed = true;
                        continue;
                    }
                }
                Sense::Eq => {
                    if min_act > rhs + ACTIVITY_TOL * scale
                        || max_act < rhs - ACTIVITY_TOL * scale
                    {
                        return Err(Empty);
                    }
                    if (min_act - rhs).abs() <= ACTIVITY_TOL * scale
                        && (max_act - rhs).abs() <= ACTIVITY_TOL * scale
                    {
                        alive[ri] = false;
                        changed = true;
                        continue;
                    }
                }
            }

            // Per-variable tightening from this row.
            for &(j, a) in terms {
                if a == 0.0 {
                    continue;
                }
                // Upper-side implication (a*x <= rhs - rest_min) applies to
                // Le and Eq rows; lower-side to Ge and Eq rows.
                if *sense != Sense::Ge {
                    if let Some(rest) =
                        residual_activity(min_sum, min_inf, j, a, &lb, &ub, true)
                    {
                        let limit = (rhs - rest) / a;
                        changed |= if a > 0.0 {
                            tighten_ub(j, limit, &mut lb, &mut ub, &is_bin)?
                        } else {
                            tighten_lb(j, limit, &mut lb, &mut ub, &is_bin)?
                        };
                    }
                }
                if *sense != Sense::Le {
                    if let Some(rest) =
                        residual_activity(max_sum, max_inf, j, a, &lb, &ub, false)
                    {
                        let limit = (rhs - rest) / a;
                        changed |= if a > 0.0 {
                            tighten_lb(j, limit, &mut lb, &mut ub, &is_bin)?
                        } else {
                            tighten_ub(j, limit, &mut lb, &mut ub, &is_bin)?
                        };
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    build_core(model, &lb, &ub, &is_bin, &rows, &alive)
}

/// Infinity-aware activity bound over a set of terms.
fn activity(terms: &[(usize, f64)], lb: &[f64], ub: &[f64], want_min: bool) -> (f64, u32) {
    let mut sum = 0.0;
    let mut inf = 0u32;
    for &(j, a) in terms {
        let v = if (a > 0.0) == want_min { lb[j] } else { ub[j] };
        if v.is_infinite() {
            inf += 1;
        } else {
            sum += a * v;
        }
    }
    (sum, inf)
}

/// Activity of a row with variable `j` removed, or None when the remainder
/// is unbounded (no tightening possible from this row).
fn residual_activity(
    sum: f64,
    inf: u32,
    j: usize,
    a: f64,
    lb: &[f64],
    ub: &[f64],
    want_min: bool,
) -> Option<f64> {
    let v = if (a > 0.0) == want_min { lb[j] } else { ub[j] };
    if v.is_infinite() {
        if inf > 1 {
            None
        } else {
            Some(sum)
        }
    } else if inf > 0 {
        None
    } else {
        Some(sum - a * v)
    }
}

/// Rounds binary bounds to integers; returns false when the box empties.
fn round_binary_bounds(lb: &mut f64, ub: &mut f64) -> bool {
    if *lb > 1.0 + INTEGRALITY_TOL || *ub < -INTEGRALITY_TOL {
        return false;
    }
    *lb = if *lb > INTEGRALITY_TOL { 1.0 } else { 0.0 };
    *ub = if *ub < 1.0 - INTEGRALITY_TOL { 0.0 } else { 1.0 };
    *lb <= *ub
}

fn tighten_ub(
    j: usize,
    limit: f64,
    lb: &mut [f64],
    ub: &mut [f64],
    is_bin: &[bool],
) -> Result<bool, Empty> {
    if !limit.is_finite() || limit >= ub[j] - 1e-11 {
        return Ok(false);
    }
    ub[j] = limit;
    if is_bin[j] && !round_binary_bounds(&mut lb[j], &mut ub[j]) {
        return Err(Empty);
    }
    if lb[j] > ub[j] + 1e-9 {
        return Err(Empty);
    }
    Ok(true)
}

fn tighten_lb(
    j: usize,
    limit: f64,
    lb: &mut [f64],
    ub: &mut [f64],
    is_bin: &[bool],
) -> Result<bool, Empty> {
    if !limit.is_finite() || limit <= lb[j] + 1e-11 {
        return Ok(false);
    }
    lb[j] = limit;
    if is_bin[j] && !round_binary_bounds(&mut lb[j], &mut ub[j]) {
        return Err(Empty);
    }
    if lb[j] > ub[j] + 1e-9 {
        return Err(Empty);
    }
    Ok(true)
}

fn build_core(
    model: &Model,
    lb: &[f64],
    ub: &[f64],
    is_bin: &[bool],
    rows: &[Row],
    alive: &[bool],
) -> Result<PresolvedModel, Empty> {
    let nv = model.vars.len();
    let mut orig_to_core = vec![VarDisposition::Fixed(0.0); nv];
    let mut core_to_orig = Vec::new();
    let mut core_is_binary = Vec::new();
    let mut core_lb = Vec::new();
    let mut core_ub = Vec::new();
    let mut objective_constant = model.objective.constant;

    for j in 0..nv {
        // A collapsed box fixes the variable; binaries collapse only at 0/1
        // thanks to round_binary_bounds.
        if ub[j] - lb[j] <= 1e-12 && lb[j].is_finite() {
            let v = if is_bin[j] { lb[j].round() } else { lb[j] };
            orig_to_core[j] = VarDisposition::Fixed(v);
            objective_constant += model.objective.coeff(j) * v;
        } else {
            orig_to_core[j] = VarDisposition::Core(core_to_orig.len());
            core_to_orig.push(j);
            core_is_binary.push(is_bin[j]);
            core_lb.push(lb[j]);
            core_ub.push(ub[j]);
        }
    }

    let n = core_to_orig.len();
    let mut core_rows = Vec::new();
    let mut row_data: Vec<Row> = Vec::new();
    for (ri, (terms, sense, rhs)) in rows.iter().enumerate() {
        if !alive[ri] {
            continue;
        }
        let mut fixed_part = 0.0;
        let mut core_terms: Vec<(usize, f64)> = Vec::new();
        for &(j, a) in terms {
            match orig_to_core[j] {
                VarDisposition::Fixed(v) => fixed_part += a * v,
                VarDisposition::Core(k) => core_terms.push((k, a)),
            }
        }
        let rhs2 = rhs - fixed_part;
        if core_terms.is_empty() {
            let scale = 1.0 + rhs2.abs();
            let ok = match sense {
                Sense::Le => 0.0 <= rhs2 + ACTIVITY_TOL * scale,
                Sense::Ge => 0.0 >= rhs2 - ACTIVITY_TOL * scale,
                Sense::Eq => rhs2.abs() <= ACTIVITY_TOL * scale,
            };
            if !ok {
                return Err(Empty);
            }
            continue;
        }
        core_rows.push(ri);
        row_data.push((core_terms, *sense, rhs2));
    }

    let m = row_data.len();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut b = vec![0.0; m];
    let mut slack_lb = vec![0.0; m];
    let mut slack_ub = vec![0.0; m];
    for (i, (terms, sense, rhs)) in row_data.iter().enumerate() {
        for &(k, v) in terms {
            cols[k].push((i, v));
        }
        b[i] = *rhs;
        match sense {
            Sense::Le => {
                slack_lb[i] = 0.0;
                slack_ub[i] = f64::INFINITY;
            }
            Sense::Ge => {
                slack_lb[i] = f64::NEG_INFINITY;
                slack_ub[i] = 0.0;
            }
            Sense::Eq => {}
        }
    }
    let c: Vec<f64> = core_to_orig.iter().map(|&j| model.objective.coeff(j)).collect();

    Ok(PresolvedModel {
        core: CoreLp::from_columns(m, &cols, b, slack_lb, slack_ub, c),
        orig_to_core,
        core_to_orig,
        core_is_binary,
        core_lb,
        core_ub,
        objective_constant,
        core_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::super::LinExpr;
    use super::*;

    fn reduced(out: PresolveOutcome) -> PresolvedModel {
        match out {
            PresolveOutcome::Reduced(p) => *p,
            PresolveOutcome::Infeasible => panic!("unexpected infeasible"),
        }
    }

    #[test]
    fn drops_redundant_rows() {
        let mut m = Model::new();
        let x = m.binary("x");
        let y = m.binary("y");
        m.add_constraint(
            LinExpr::from_terms([(x, 1.0), (y, 1.0)]),
            Sense::Le,
            10.0,
            "slack_row",
        );
        m.add_constraint(
            LinExpr::from_terms([(x, 1.0), (y, 1.0)]),
            Sense::Le,
            1.0,
            "binding_row",
        );
        m.objective = LinExpr::from_terms([(x, 1.0)]);
        let p = reduced(presolve(&m));
        assert_eq!(p.core.m, 1, "only the binding row survives");
        assert_eq!(p.core_rows, vec![1]);
        assert_eq!(p.core.n, 2);
    }

    #[test]
    fn detects_activity_infeasibility() {
        let mut m = Model::new();
        let x = m.binary("x");
        let y = m.binary("y");
        m.add_constraint(
            LinExpr::from_terms([(x, 1.0), (y, 1.0)]),
            Sense::Ge,
            3.0,
            "impossible",
        );
        assert!(matches!(presolve(&m), PresolveOutcome::Infeasible));
    }

    #[test]
    fn fixes_binary_by_tightening() {
        // 2x <= 1 forces the binary x to 0.
        let mut m = Model::new();
        let x = m.binary("x");
        let y = m.binary("y");
        m.add_constraint(LinExpr::from_terms([(x, 2.0)]), Sense::Le, 1.0, "cap");
        m.objective = LinExpr::from_terms([(x, 5.0), (y, 1.0)]);
        let p = reduced(presolve(&m));
        assert_eq!(p.orig_to_core[x], VarDisposition::Fixed(0.0));
        assert!(matches!(p.orig_to_core[y], VarDisposition::Core(_)));
        assert_eq!(p.objective_constant, 0.0);
        // The cap row is gone after the fix.
        assert_eq!(p.core.m, 0);
    }

    #[test]
    fn equality_singleton_fixes_at_one_and_contributes_objective() {
        let mut m = Model::new();
        let x = m.binary("x");
        let y = m.binary("y");
        m.add_constraint(LinExpr::from_terms([(x, 3.0)]), Sense::Eq, 3.0, "pin");
        m.objective = LinExpr::from_terms([(x, 5.0), (y, 1.0)]);
        let p = reduced(presolve(&m));
        assert_eq!(p.orig_to_core[x], VarDisposition::Fixed(1.0));
        assert_eq!(p.objective_constant, 5.0);
    }

    #[test]
    fn interior_pinned_binary_is_infeasible_not_fractional() {
        // 2x = 1 would need x = 0.5; a binary cannot take that value.
        let mut m = Model::new();
        let x = m.binary("x");
        m.add_constraint(LinExpr::from_terms([(x, 2.0)]), Sense::Eq, 1.0, "half");
        assert!(matches!(presolve(&m), PresolveOutcome::Infeasible));
    }

    #[test]
    fn continuous_chain_tightening_propagates() {
        // y <= x and x <= 0.25 push ub(y) down to 0.25 across passes.
        let mut m = Model::new();
        let x = m.continuous(0.0, 10.0, "x");
        let y = m.continuous(0.0, 10.0, "y");
        m.add_constraint(LinExpr::from_terms([(x, 1.0)]), Sense::Le, 0.25, "capx");
        m.add_constraint(
            LinExpr::from_terms([(y, 1.0), (x, -1.0)]),
            Sense::Le,
            0.0,
            "link",
        );
        m.objective = LinExpr::from_terms([(y, 1.0)]);
        let p = reduced(presolve(&m));
        let yk = match p.orig_to_core[y] {
            VarDisposition::Core(k) => k,
            other => panic!("y should stay: {other:?}"),
        };
        assert!(p.core_ub[yk] <= 0.25 + 1e-9);
    }

    #[test]
    fn fixed_substitution_adjusts_rhs() {
        // x pinned to 1 by its bounds; row x + y <= 1.5 must become y <= 0.5
        // whether it survives as a row or is absorbed into the bound.
        let mut m = Model::new();
        let x = m.continuous(1.0, 1.0, "x");
        let y = m.continuous(0.0, 10.0, "y");
        m.add_constraint(
            LinExpr::from_terms([(x, 1.0), (y, 1.0)]),
            Sense::Le,
            1.5,
            "sum",
        );
        m.objective = LinExpr::from_terms([(y, 1.0)]);
        let p = reduced(presolve(&m));
        assert_eq!(p.orig_to_core[x], VarDisposition::Fixed(1.0));
        let yk = match p.orig_to_core[y] {
            VarDisposition::Core(k) => k,
            other => panic!("y should stay: {other:?}"),
        };
        assert!(p.core_ub[yk] <= 0.5 + 1e-9);
        let restored = p.restore(&vec![0.5; p.core.n]);
        assert_eq!(restored[x], 1.0);
        assert_eq!(restored[y], 0.5);
    }

    #[test]
    fn constraint_constant_folds_into_rhs() {
        // (x + 2) <= 3 is x <= 1.
        let mut m = Model::new();
        let x = m.continuous(0.0, 10.0, "x");
        let mut e = LinExpr::from_terms([(x, 1.0)]);
        e.add_constant(2.0);
        m.add_constraint(e, Sense::Le, 3.0, "shifted");
        m.objective = LinExpr::from_terms([(x, 1.0)]);
        let p = reduced(presolve(&m));
        match p.orig_to_core[x] {
            VarDisposition::Core(k) => assert!(p.core_ub[k] <= 1.0 + 1e-9),
            VarDisposition::Fixed(v) => assert!((v - 1.0).abs() <= 1e-9),
        }
    }
}
