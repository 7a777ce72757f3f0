//! Cross-evaluation: freeze a plan's topology (installations, tree,
//! serving assignments) and re-solve the continuous resource split under
//! the other objective. This is how a peak-oriented deployment gets a mean
//! figure and vice versa.

use super::{build_mtf, build_ptf, InstalledKind, Plan, PlannerError, PlanningInput, VarMap};
use crate::milp::{solve_lp_relaxation, Model, Status};

/// Pins every binary to the plan's topology, leaving flows, timeshares and
/// orientations free.
fn fix_binaries(model: &mut Model, vm: &VarMap, plan: &Plan) -> Result<(), PlannerError> {
    let n = vm.n_sites;
    let nt = vm.n_tps;
    if plan.installed.len() != n || plan.src_assignments.len() != nt {
        return Err(PlannerError::Evaluation(format!(
            "plan shape ({} sites, {} assignments) does not match the input ({n}, {nt})",
            plan.installed.len(),
            plan.src_assignments.len()
        )));
    }
    let mut fix = |id: usize, on: bool| {
        let v = if on { 1.0 } else { 0.0 };
        model.vars[id].lower = v;
        model.vars[id].upper = v;
    };
    for (c, kind) in plan.installed.iter().enumerate() {
        let (d, i, r) = match kind {
            InstalledKind::Donor => (true, true, false),
            InstalledKind::Iab => (false, true, false),
            InstalledKind::Ris => (false, false, true),
            InstalledKind::None => (false, false, false),
        };
        fix(vm.y_don[c], d);
        fix(vm.y_iab[c], i);
        fix(vm.y_ris[c], r);
    }
    let mut z_on = vec![false; n * n];
    for e in &plan.tree_edges {
        if e.from >= n || e.to >= n {
            return Err(PlannerError::Evaluation(format!(
                "tree edge {}->{} is out of range",
                e.from, e.to
            )));
        }
        z_on[e.from * n + e.to] = true;
    }
    for c in 0..n {
        for d in 0..n {
            fix(vm.z_id(c, d), z_on[c * n + d]);
        }
    }
    let mut x_on = vec![false; nt * n * n];
    for a in &plan.src_assignments {
        if a.tp >= nt || a.bs >= n || a.ris >= n {
            return Err(PlannerError::Evaluation(format!(
                "assignment (tp {}, bs {}, ris {}) is out of range",
                a.tp, a.bs, a.ris
            )));
        }
        x_on[(a.tp * n + a.bs) * n + a.ris] = true;
    }
    for t in 0..nt {
        for c in 0..n {
            for r in 0..n {
                fix(vm.x_id(t, c, r), x_on[(t * n + c) * n + r]);
            }
        }
    }
    Ok(())
}

fn solve_fixed(model: &Model, what: &str) -> Result<f64, PlannerError> {
    let sol = solve_lp_relaxation(model)?;
    match sol.status {
        Status::Optimal => Ok(sol.objective),
        Status::Infeasible => Err(PlannerError::Evaluation(format!(
            "the fixed topology cannot carry the guaranteed demand ({what})"
        ))),
        s => Err(PlannerError::Evaluation(format!("{what} evaluation ended with status {s:?}"))),
    }
}

/// Best mean throughput per user on the plan's fixed topology: maximizes
/// the summed guaranteed flows and divides by the user count.
pub fn evaluate_mean(plan: &Plan, input: &PlanningInput) -> Result<f64, PlannerError> {
    let (mut model, vm) = build_mtf(input)?;
    fix_binaries(&mut model, &vm, plan)?;
    let obj = solve_fixed(&model, "mean")?;
    Ok(obj / input.n_tps() as f64)
}

/// Peak throughput per user on the plan's fixed topology: guaranteed
/// flows pinned at the demand, per-user extras maximized. Reported as
/// demand + extras by default.
pub fn evaluate_peak(plan: &Plan, input: &PlanningInput) -> Result<f64, PlannerError> {
    evaluate_peak_opts(plan, input, true)
}

/// As [`evaluate_peak`]; `include_demand = false` reports the extra flows
/// alone.
pub fn evaluate_peak_opts(
    plan: &Plan,
    input: &PlanningInput,
    include_demand: bool,
) -> Result<f64, PlannerError> {
    let (mut model, vm) = build_ptf(input)?;
    fix_binaries(&mut model, &vm, plan)?;
    let obj = solve_fixed(&model, "peak")?;
    let per_user = obj / input.n_tps() as f64;
    Ok(if include_demand { input.demand_mbps + per_user } else { per_user })
}

#[cfg(test)]
mod tests {
    use super::super::{decode, fixtures, Formulation};
    use super::*;
    use crate::milp::{solve_branch_and_bound, SolveOptions};

    fn plan_for(input: &PlanningInput, form: Formulation) -> Plan {
        let (m, vm) = match form {
            Formulation::Mtf => build_mtf(input).unwrap(),
            Formulation::Ptf => build_ptf(input).unwrap(),
        };
        let sol = solve_branch_and_bound(&m, &SolveOptions::default()).unwrap();
        decode(&sol, &vm, input).unwrap()
    }

    #[test]
    fn mean_of_mtf_plan_equals_objective_per_user() {
        let input = fixtures::relay_input(1.0);
        let plan = plan_for(&input, Formulation::Mtf);
        let mean = evaluate_mean(&plan, &input).unwrap();
        assert!((mean - plan.objective / 2.0).abs() < 1e-6, "{mean} vs {}", plan.objective / 2.0);
    }

    #[test]
    fn peak_of_ptf_plan_equals_objective_transform() {
        let input = fixtures::relay_input(1.0);
        let plan = plan_for(&input, Formulation::Ptf);
        let peak = evaluate_peak(&plan, &input).unwrap();
        let expect = 150.0 + plan.objective / 2.0;
        assert!((peak - expect).abs() < 1e-6, "{peak} vs {expect}");
        let bare = evaluate_peak_opts(&plan, &input, false).unwrap();
        assert!((bare - plan.objective / 2.0).abs() < 1e-6);
    }

    #[test]
    fn ptf_plan_mean_at_least_demand() {
        let input = fixtures::relay_input(1.0);
        let plan = plan_for(&input, Formulation::Ptf);
        let mean = evaluate_mean(&plan, &input).unwrap();
        assert!(mean >= 150.0 - 1e-9, "{mean}");
    }

    #[test]
    fn dominance_between_formulations() {
        for budget in [0.0, 0.1, 1.0, 1.1] {
            let input = fixtures::ris_input(budget);
            let mtf_plan = plan_for(&input, Formulation::Mtf);
            let ptf_plan = plan_for(&input, Formulation::Ptf);
            let mean_m = evaluate_mean(&mtf_plan, &input).unwrap();
            let mean_p = evaluate_mean(&ptf_plan, &input).unwrap();
            assert!(mean_m >= mean_p - 1e-6, "mean dominance: {mean_m} vs {mean_p}");
            let peak_m = evaluate_peak(&mtf_plan, &input).unwrap();
            let peak_p = evaluate_peak(&ptf_plan, &input).unwrap();
            assert!(peak_p >= peak_m - 1e-6, "peak dominance: {peak_p} vs {peak_m}");
        }
    }

    #[test]
    fn single_tp_donor_direct_peak_is_the_link_capacity() {
        let scenario = fixtures::skeleton(1, 1);
        let mut lp = fixtures::blank_links(2, 1);
        fixtures::set_direct(&mut lp, 0, 0, 1, 800.0);
        lp.m_max = 10_000.0;
        let input = PlanningInput {
            scenario,
            link_params: lp,
            budget: 0.0,
            demand_mbps: 150.0,
            price_iab: 1.0,
            price_ris: 0.1,
        };
        let plan = plan_for(&input, Formulation::Ptf);
        let peak = evaluate_peak(&plan, &input).unwrap();
        assert!((peak - 800.0).abs() < 1e-6, "{peak}");
    }

    #[test]
    fn impossible_topology_is_an_error() {
        let input = fixtures::relay_input(0.0);
        let mut plan = plan_for(&input, Formulation::Mtf);
        // Point TP 0 at the uninstalled relay: activation fails, the LP is
        // infeasible for the demand.
        plan.src_assignments[0].bs = 1;
        assert!(matches!(
            evaluate_mean(&plan, &input),
            Err(PlannerError::Evaluation(_))
        ));
    }
}
