//! Turns a solver solution into a [`Plan`], rounding binaries at 0.5 and
//! validating the plan's structural invariants. Anything inconsistent is an
//! error — no silent repair.

use super::{
    ExtraEdgeFlow, Formulation, InstalledKind, Plan, PlannerError, PlanningInput, SrcAssignment,
    TreeEdge, VarMap,
};
use crate::milp::{Solution, Status};
use crate::scenario::wrap_angle;

const FLOW_TOL: f64 = 1e-6;

pub fn decode(
    solution: &Solution,
    varmap: &VarMap,
    input: &PlanningInput,
) -> Result<Plan, PlannerError> {
    // A limit-hit solve with an incumbent is still decodable; only proven
    // infeasibility/unboundedness (or an empty incumbent) is not.
    match solution.status {
        Status::Optimal | Status::GapReached | Status::Limit => {}
        s => {
            return Err(PlannerError::Decode(format!(
                "cannot decode a solution with status {s:?}"
            )))
        }
    }
    if !solution.has_values() {
        return Err(PlannerError::Decode("solution carries no variable values".into()));
    }
    let v = &solution.values;
    if v.len() != varmap.total_vars() {
        return Err(PlannerError::Decode(format!(
            "solution has {} values but the variable map expects {}",
            v.len(),
            varmap.total_vars()
        )));
    }
    let n = varmap.n_sites;
    let nt = varmap.n_tps;
    let donor = input.donor();
    let fake = input.fake();
    let ptf = varmap.formulation == Formulation::Ptf;
    let bit = |id: usize| v[id] >= 0.5;

    let mut installed = Vec::with_capacity(n);
    for c in 0..n {
        let d = bit(varmap.y_don[c]);
        let i = bit(varmap.y_iab[c]);
        let r = bit(varmap.y_ris[c]);
        if d && !i {
            return Err(PlannerError::Decode(format!(
                "site {c} is a donor without an IAB installation"
            )));
        }
        if i && r {
            return Err(PlannerError::Decode(format!(
                "site {c} hosts both an IAB node and a surface"
            )));
        }
        installed.push(if d {
            InstalledKind::Donor
        } else if i {
            InstalledKind::Iab
        } else if r {
            InstalledKind::Ris
        } else {
            InstalledKind::None
        });
    }
    if installed[donor] != InstalledKind::Donor {
        return Err(PlannerError::Decode("the designated donor site is not a donor".into()));
    }
    if installed.iter().filter(|&&k| k == InstalledKind::Donor).count() != 1 {
        return Err(PlannerError::Decode("expected exactly one donor".into()));
    }
    if installed[fake] != InstalledKind::Ris {
        return Err(PlannerError::Decode("the virtual direct-path surface is missing".into()));
    }

    // Budget check over priced devices.
    let mut spent = 0.0;
    for (c, kind) in installed.iter().enumerate() {
        if c == donor || c == fake {
            continue;
        }
        spent += match kind {
            InstalledKind::Donor | InstalledKind::Iab => input.price_iab,
            InstalledKind::Ris => input.price_ris,
            InstalledKind::None => 0.0,
        };
    }
    if spent > input.budget + 1e-9 {
        return Err(PlannerError::Decode(format!(
            "plan spends {spent} with budget {}",
            input.budget
        )));
    }

    let mut tree_edges = Vec::new();
    for c in 0..n {
        for d in 0..n {
            let flow = v[varmap.f_id(c, d)];
            if bit(varmap.z_id(c, d)) {
                tree_edges.push(TreeEdge { from: c, to: d, flow_mbps: flow.max(0.0) });
            } else if flow > FLOW_TOL * (1.0 + input.link_params.cap_bh[c][d]) {
                return Err(PlannerError::Decode(format!(
                    "backhaul flow {flow} on inactive link {c}->{d}"
                )));
            }
        }
    }
    // Tree shape: at most one parent, none for the donor.
    let mut indegree = vec![0usize; n];
    for e in &tree_edges {
        indegree[e.to] += 1;
    }
    if indegree[donor] > 0 {
        return Err(PlannerError::Decode("the donor has an incoming tree edge".into()));
    }
    if let Some(c) = (0..n).find(|&c| indegree[c] > 1) {
        return Err(PlannerError::Decode(format!("site {c} has {} parents", indegree[c])));
    }

    let mut src_assignments = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut chosen: Option<(usize, usize)> = None;
        for c in 0..n {
            for r in 0..n {
                if bit(varmap.x_id(t, c, r)) {
                    if chosen.is_some() {
                        return Err(PlannerError::Decode(format!(
                            "test point {t} has multiple serving options"
                        )));
                    }
                    chosen = Some((c, r));
                }
            }
        }
        let Some((c, r)) = chosen else {
            return Err(PlannerError::Decode(format!("test point {t} is unserved")));
        };
        let guaranteed = if ptf { input.demand_mbps } else { v[varmap.g_id(t, c, r)] };
        let extra = ptf.then(|| v[varmap.g_x_id(t, c, r)].max(0.0));
        src_assignments.push(SrcAssignment {
            tp: t,
            bs: c,
            ris: r,
            guaranteed_mbps: guaranteed.max(0.0),
            extra_mbps: extra,
        });
    }

    let tx_timeshare: Vec<f64> = (0..n).map(|c| v[varmap.t_tx[c]].max(0.0)).collect();
    let rx_timeshare: Vec<f64> = (0..n).map(|c| v[varmap.t_rx[c]].max(0.0)).collect();
    for c in 0..n {
        if tx_timeshare[c] + rx_timeshare[c] > 1.0 + 1e-6 {
            return Err(PlannerError::Decode(format!(
                "site {c} timeshare {} exceeds one",
                tx_timeshare[c] + rx_timeshare[c]
            )));
        }
    }

    let ris_orientation: Vec<Option<f64>> = (0..n)
        .map(|c| {
            (installed[c] == InstalledKind::Ris && c != fake)
                .then(|| wrap_angle(v[varmap.phi[c]] + varmap.phi_rotation[c]))
        })
        .collect();

    let donor_ingress_mbps = v[varmap.w[donor]].max(0.0);
    let donor_extra_ingress_mbps =
        ptf.then(|| (0..nt).map(|t| v[varmap.w_x_id(t, donor)].max(0.0)).collect());

    let mut extra_flows = Vec::new();
    if ptf {
        for t in 0..nt {
            for e in &tree_edges {
                let fx = v[varmap.f_x_id(t, e.from, e.to)];
                if fx > 1e-9 {
                    extra_flows.push(ExtraEdgeFlow { tp: t, from: e.from, to: e.to, mbps: fx });
                }
            }
        }
    }

    Ok(Plan {
        formulation: varmap.formulation,
        installed,
        tree_edges,
        src_assignments,
        tx_timeshare,
        rx_timeshare,
        ris_orientation,
        donor_ingress_mbps,
        donor_extra_ingress_mbps,
        extra_flows,
        objective: solution.objective,
        best_bound: solution.best_bound,
        gap: solution.gap,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{build_mtf, build_ptf, fixtures};
    use super::*;
    use crate::milp::{solve_branch_and_bound, SolveOptions};

    fn solved(input: &PlanningInput, ptf: bool) -> (Solution, VarMap) {
        let (m, vm) = if ptf { build_ptf(input).unwrap() } else { build_mtf(input).unwrap() };
        (solve_branch_and_bound(&m, &SolveOptions::default()).unwrap(), vm)
    }

    #[test]
    fn budget_zero_decodes_to_donor_direct() {
        let input = fixtures::relay_input(0.0);
        let (sol, vm) = solved(&input, false);
        let plan = decode(&sol, &vm, &input).unwrap();
        assert_eq!(plan.installed[0], InstalledKind::Donor);
        assert_eq!(plan.installed[1], InstalledKind::None);
        assert_eq!(plan.installed[2], InstalledKind::Ris); // virtual site
        assert!(plan.tree_edges.is_empty());
        assert_eq!(plan.src_assignments.len(), 2);
        for a in &plan.src_assignments {
            assert_eq!(a.bs, 0);
            assert_eq!(a.ris, 2);
            assert!(a.extra_mbps.is_none());
        }
        assert!((plan.donor_ingress_mbps - 650.0).abs() < 1e-6);
        assert_eq!(plan.device_counts(&input.scenario), (0, 0));
    }

    #[test]
    fn relay_plan_has_tree_edge_and_flows() {
        let input = fixtures::relay_input(1.0);
        let (sol, vm) = solved(&input, false);
        let plan = decode(&sol, &vm, &input).unwrap();
        assert_eq!(plan.installed[1], InstalledKind::Iab);
        assert_eq!(plan.tree_edges.len(), 1);
        let e = &plan.tree_edges[0];
        assert_eq!((e.from, e.to), (0, 1));
        assert!((e.flow_mbps - 620.6896551724138).abs() < 1e-4, "{}", e.flow_mbps);
        // Timeshares came out of the solver's equality rows.
        let tx0 = plan.tx_timeshare[0];
        assert!((tx0 - (620.6896551724138 / 2000.0 + 551.7241379310345 / 800.0)).abs() < 1e-4);
        assert_eq!(plan.device_counts(&input.scenario), (1, 0));
    }

    #[test]
    fn ptf_plan_carries_extras() {
        let input = fixtures::relay_input(1.0);
        let (sol, vm) = solved(&input, true);
        let plan = decode(&sol, &vm, &input).unwrap();
        assert_eq!(plan.formulation, Formulation::Ptf);
        for a in &plan.src_assignments {
            assert!((a.guaranteed_mbps - 150.0).abs() < 1e-9);
            assert!(a.extra_mbps.is_some());
        }
        let extras = plan.donor_extra_ingress_mbps.as_ref().unwrap();
        assert_eq!(extras.len(), 2);
        assert!((extras.iter().sum::<f64>() - plan.objective).abs() < 1e-5);
        // TP 1's extra traffic crosses the relay edge.
        assert!(plan
            .extra_flows
            .iter()
            .any(|e| e.tp == 1 && e.from == 0 && e.to == 1 && e.mbps > 100.0));
    }

    #[test]
    fn surface_orientation_is_unrotated_and_in_window() {
        let input = fixtures::ris_input(0.1);
        let (sol, vm) = solved(&input, false);
        let plan = decode(&sol, &vm, &input).unwrap();
        assert_eq!(plan.installed[2], InstalledKind::Ris);
        let phi = plan.ris_orientation[2].expect("installed surface has an orientation");
        let half = input.link_params.fov_rad / 2.0;
        assert!(crate::scenario::angle_dist(phi, 0.3) <= half + 1e-7);
        assert!(crate::scenario::angle_dist(phi, 0.9) <= half + 1e-7);
        assert!(plan.ris_orientation[3].is_none(), "virtual site has no orientation");
    }

    #[test]
    fn refuses_unusable_solutions() {
        let input = fixtures::relay_input(0.0);
        let (m, vm) = build_mtf(&input).unwrap();
        let mut sol = solve_branch_and_bound(&m, &SolveOptions::default()).unwrap();
        // A limit-hit solve that still carries an incumbent is usable.
        sol.status = Status::Limit;
        assert!(decode(&sol, &vm, &input).is_ok());
        sol.status = Status::Infeasible;
        assert!(matches!(decode(&sol, &vm, &input), Err(PlannerError::Decode(_))));
        sol.status = Status::Optimal;
        sol.values.clear();
        assert!(decode(&sol, &vm, &input).is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let input = fixtures::relay_input(1.0);
        let (sol, vm) = solved(&input, true);
        let plan = decode(&sol, &vm, &input).unwrap();
        let text = plan.to_json();
        let back = Plan::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.src_assignments.len(), plan.src_assignments.len());
    }
}
