//! Model construction: mean- and peak-throughput formulations plus the
//! forced-bottleneck rewrite.
//!
//! Constraint labels carry a stable family prefix ("2b:" … "3h:") used by
//! the feasibility report and by the bottleneck rewrite; the bracketed
//! suffix names the row's indices.

use super::{rotated, seam_rotations, Formulation, PlannerError, PlanningInput, VarMap};
use crate::milp::{LinExpr, Model, Sense};
use std::f64::consts::TAU;

pub fn build_mtf(input: &PlanningInput) -> Result<(Model, VarMap), PlannerError> {
    build(input, Formulation::Mtf)
}

pub fn build_ptf(input: &PlanningInput) -> Result<(Model, VarMap), PlannerError> {
    build(input, Formulation::Ptf)
}

fn build(input: &PlanningInput, form: Formulation) -> Result<(Model, VarMap), PlannerError> {
    input.validate()?;
    let n = input.n_sites();
    let nt = input.n_tps();
    let lp = &input.link_params;
    for t in 0..nt {
        if !lp.tp_has_access(t) {
            return Err(PlannerError::UnservableTestPoint(t));
        }
    }
    let donor = input.donor();
    let fake = input.fake();
    let demand = input.demand_mbps;
    let fov = lp.fov_rad;
    let ptf = form == Formulation::Ptf;

    let mut m = Model::new();
    let mut vm = VarMap {
        formulation: form,
        n_sites: n,
        n_tps: nt,
        y_don: Vec::new(),
        y_iab: Vec::new(),
        y_ris: Vec::new(),
        x: Vec::new(),
        z: Vec::new(),
        f: Vec::new(),
        g: Vec::new(),
        w: Vec::new(),
        t_tx: Vec::new(),
        t_rx: Vec::new(),
        phi: Vec::new(),
        f_x: Vec::new(),
        g_x: Vec::new(),
        w_x: Vec::new(),
        phi_rotation: seam_rotations(input),
    };

    // Branch on install decisions before tree edges before assignments:
    // fixing a device cascades through the budget and degree rows, while an
    // assignment flip barely moves the relaxation.
    for c in 0..n {
        let v = m.binary(format!("yDON_{c}"));
        m.set_branch_priority(v, 3);
        vm.y_don.push(v);
    }
    for c in 0..n {
        let v = m.binary(format!("yIAB_{c}"));
        m.set_branch_priority(v, 3);
        vm.y_iab.push(v);
    }
    for c in 0..n {
        let v = m.binary(format!("yRIS_{c}"));
        m.set_branch_priority(v, 3);
        vm.y_ris.push(v);
    }
    for t in 0..nt {
        for c in 0..n {
            for r in 0..n {
                let v = m.binary(format!("x_{t}_{c}_{r}"));
                m.set_branch_priority(v, 1);
                vm.x.push(v);
            }
        }
    }
    for c in 0..n {
        for d in 0..n {
            let v = m.binary(format!("z_{c}_{d}"));
            m.set_branch_priority(v, 2);
            vm.z.push(v);
        }
    }
    for c in 0..n {
        for d in 0..n {
            vm.f.push(m.continuous(0.0, f64::INFINITY, format!("f_{c}_{d}")));
        }
    }
    if !ptf {
        for t in 0..nt {
            for c in 0..n {
                for r in 0..n {
                    vm.g.push(m.continuous(0.0, f64::INFINITY, format!("g_{t}_{c}_{r}")));
                }
            }
        }
    }
    for c in 0..n {
        vm.w.push(m.continuous(0.0, f64::INFINITY, format!("w_{c}")));
    }
    for c in 0..n {
        vm.t_tx.push(m.continuous(0.0, 1.0, format!("tTX_{c}")));
    }
    for c in 0..n {
        vm.t_rx.push(m.continuous(0.0, 1.0, format!("tRX_{c}")));
    }
    for c in 0..n {
        vm.phi.push(m.continuous(0.0, TAU, format!("phi_{c}")));
    }
    if ptf {
        for t in 0..nt {
            for c in 0..n {
                for d in 0..n {
                    vm.f_x.push(m.continuous(0.0, f64::INFINITY, format!("fX_{t}_{c}_{d}")));
                }
            }
        }
        for t in 0..nt {
            for c in 0..n {
                for r in 0..n {
                    vm.g_x.push(m.continuous(0.0, f64::INFINITY, format!("gX_{t}_{c}_{r}")));
                }
            }
        }
        for t in 0..nt {
            for c in 0..n {
                vm.w_x.push(m.continuous(0.0, f64::INFINITY, format!("wX_{t}_{c}")));
            }
        }
    }

    // Guaranteed flow g as it appears in the shared constraints: a variable
    // under MTF, demand * x under PTF.
    let add_g = |e: &mut LinExpr, vm: &VarMap, t: usize, c: usize, r: usize, scale: f64| {
        if ptf {
            e.add(vm.x_id(t, c, r), scale * demand);
        } else {
            e.add(vm.g_id(t, c, r), scale);
        }
    };

    // Objective: summed guaranteed flows (MTF) or summed extra flows (PTF).
    let mut obj = LinExpr::new();
    for t in 0..nt {
        for c in 0..n {
            for r in 0..n {
                obj.add(if ptf { vm.g_x_id(t, c, r) } else { vm.g_id(t, c, r) }, 1.0);
            }
        }
    }
    m.objective = obj;

    // (2b) a site hosts an IAB node or a surface, not both.
    for c in 0..n {
        let e = LinExpr::from_terms([(vm.y_iab[c], 1.0), (vm.y_ris[c], 1.0)]);
        m.add_constraint(e, Sense::Le, 1.0, format!("2b:iab_ris_mutex[c{c}]"));
    }
    // (2c) only an installed IAB node can be promoted to donor.
    for c in 0..n {
        let e = LinExpr::from_terms([(vm.y_don[c], 1.0), (vm.y_iab[c], -1.0)]);
        m.add_constraint(e, Sense::Le, 0.0, format!("2c:donor_promotion[c{c}]"));
    }
    // (2d) at most a single donor.
    {
        let e = LinExpr::from_terms((0..n).map(|c| (vm.y_don[c], 1.0)));
        m.add_constraint(e, Sense::Le, 1.0, "2d:single_donor");
    }
    // (2e) the virtual direct-path surface is always installed.
    m.add_constraint(
        LinExpr::from_terms([(vm.y_ris[fake], 1.0)]),
        Sense::Ge,
        1.0,
        "2e:fake_ris_installed",
    );
    // (2f) the donor lives at its designated site.
    m.add_constraint(
        LinExpr::from_terms([(vm.y_don[donor], 1.0)]),
        Sense::Ge,
        1.0,
        "2f:donor_installed",
    );
    // (2g) a backhaul link needs line of sight and both endpoints installed.
    for c in 0..n {
        for d in 0..n {
            let delta = if lp.delta_bh[c][d] { 1.0 } else { 0.0 };
            let mut e = LinExpr::new();
            e.add(vm.z_id(c, d), 1.0);
            e.add(vm.y_iab[c], -delta / 2.0);
            e.add(vm.y_iab[d], -delta / 2.0);
            m.add_constraint(e, Sense::Le, 0.0, format!("2g:bh_link_act[c{c} d{d}]"));
        }
    }
    // (2h) a serving option needs its link active and both devices in place.
    for t in 0..nt {
        for c in 0..n {
            for r in 0..n {
                let delta = if lp.delta_src[t][c][r] { 1.0 } else { 0.0 };
                let mut e = LinExpr::new();
                e.add(vm.x_id(t, c, r), 1.0);
                e.add(vm.y_iab[c], -delta / 2.0);
                e.add(vm.y_ris[r], -delta / 2.0);
                m.add_constraint(e, Sense::Le, 0.0, format!("2h:src_act[t{t} c{c} r{r}]"));
            }
        }
    }
    // (2i) every test point is served by exactly one option.
    for t in 0..nt {
        let mut e = LinExpr::new();
        for c in 0..n {
            for r in 0..n {
                e.add(vm.x_id(t, c, r), 1.0);
            }
        }
        m.add_constraint(e, Sense::Eq, 1.0, format!("2i:one_src[t{t}]"));
    }
    // (2j) tree topology: at most one parent, none for the donor.
    for c in 0..n {
        let mut e = LinExpr::new();
        for d in 0..n {
            e.add(vm.z_id(d, c), 1.0);
        }
        e.add(vm.y_don[c], 1.0);
        m.add_constraint(e, Sense::Le, 1.0, format!("2j:tree_indegree[c{c}]"));
    }
    // (2k) device budget, donor site and virtual surface excluded.
    {
        let mut e = LinExpr::new();
        for c in 0..n {
            if c == donor || c == fake {
                continue;
            }
            e.add(vm.y_iab[c], input.price_iab);
            e.add(vm.y_ris[c], input.price_ris);
        }
        m.add_constraint(e, Sense::Le, input.budget, "2k:budget");
    }
    // (2l) guaranteed-flow balance at every site.
    for c in 0..n {
        let mut e = LinExpr::new();
        e.add(vm.w[c], 1.0);
        for d in 0..n {
            e.add(vm.f_id(d, c), 1.0);
            e.add(vm.f_id(c, d), -1.0);
        }
        for t in 0..nt {
            for r in 0..n {
                add_g(&mut e, &vm, t, c, r, -1.0);
            }
        }
        m.add_constraint(e, Sense::Eq, 0.0, format!("2l:flow_balance[c{c}]"));
    }
    // (2m) backhaul flow only on activated links, up to link capacity.
    for c in 0..n {
        for d in 0..n {
            let mut e = LinExpr::new();
            e.add(vm.f_id(c, d), 1.0);
            e.add(vm.z_id(c, d), -lp.cap_bh[c][d]);
            m.add_constraint(e, Sense::Le, 0.0, format!("2m:bh_flow_cap[c{c} d{d}]"));
        }
    }
    // (2n) serving flow between the demand and the link capacity.
    for t in 0..nt {
        for c in 0..n {
            for r in 0..n {
                let cap = lp.cap_src[t][c][r];
                if ptf {
                    // demand*x <= g <= cap*x with g = demand*x leaves only
                    // the capacity side: (demand - cap) * x <= 0.
                    let mut e = LinExpr::new();
                    e.add(vm.x_id(t, c, r), demand - cap);
                    m.add_constraint(e, Sense::Le, 0.0, format!("2n:src_cap[t{t} c{c} r{r}]"));
                } else {
                    let mut lo = LinExpr::new();
                    lo.add(vm.x_id(t, c, r), demand);
                    lo.add(vm.g_id(t, c, r), -1.0);
                    m.add_constraint(lo, Sense::Le, 0.0, format!("2n:src_demand[t{t} c{c} r{r}]"));
                    let mut hi = LinExpr::new();
                    hi.add(vm.g_id(t, c, r), 1.0);
                    hi.add(vm.x_id(t, c, r), -cap);
                    m.add_constraint(hi, Sense::Le, 0.0, format!("2n:src_cap[t{t} c{c} r{r}]"));
                }
            }
        }
    }
    // (2o) donor ingress bounded by the core capacity.
    for c in 0..n {
        let mut e = LinExpr::new();
        e.add(vm.w[c], 1.0);
        e.add(vm.y_don[c], -lp.m_max);
        m.add_constraint(e, Sense::Le, 0.0, format!("2o:donor_ingress_cap[c{c}]"));
    }
    // (2p) transmission timeshare: backhaul out plus serving links.
    for c in 0..n {
        let mut e = LinExpr::new();
        e.add(vm.t_tx[c], 1.0);
        for d in 0..n {
            if lp.delta_bh[c][d] {
                e.add(vm.f_id(c, d), -1.0 / lp.cap_bh[c][d]);
            }
        }
        for t in 0..nt {
            for r in 0..n {
                if lp.delta_src[t][c][r] {
                    add_g(&mut e, &vm, t, c, r, -1.0 / lp.cap_src[t][c][r]);
                }
            }
        }
        m.add_constraint(e, Sense::Eq, 0.0, format!("2p:tx_time[c{c}]"));
    }
    // (2q) reception timeshare and the half-duplex budget.
    for c in 0..n {
        let mut e = LinExpr::new();
        e.add(vm.t_rx[c], 1.0);
        for d in 0..n {
            if lp.delta_bh[d][c] {
                e.add(vm.f_id(d, c), -1.0 / lp.cap_bh[d][c]);
            }
        }
        m.add_constraint(e, Sense::Eq, 0.0, format!("2q:rx_time[c{c}]"));
    }
    for c in 0..n {
        let e = LinExpr::from_terms([
            (vm.t_tx[c], 1.0),
            (vm.t_rx[c], 1.0),
            (vm.y_iab[c], -1.0),
        ]);
        m.add_constraint(e, Sense::Le, 0.0, format!("2q:half_duplex[c{c}]"));
    }
    // (2r) surface timeshare over its reflected-only rates.
    for r in 0..n {
        if r == fake {
            continue;
        }
        let mut e = LinExpr::new();
        for t in 0..nt {
            for c in 0..n {
                if lp.delta_src[t][c][r] {
                    add_g(&mut e, &vm, t, c, r, 1.0 / lp.cap_ris[t][c][r]);
                }
            }
        }
        e.add(vm.y_ris[r], -1.0);
        m.add_constraint(e, Sense::Le, 0.0, format!("2r:ris_timeshare[r{r}]"));
    }
    // (2s)-(2v) orientation windows in the rotated frame: when option
    // (t,c,r) is active, the surface bearing must sit within half a field
    // of view of both the user and the base station directions.
    for t in 0..nt {
        for c in 0..n {
            if c == fake {
                continue;
            }
            for r in 0..n {
                if r == fake {
                    continue;
                }
                let x = vm.x_id(t, c, r);
                let phi = vm.phi[r];
                let rot = vm.phi_rotation[r];
                let a = rotated(lp.phi_a[r][t], rot);
                let b = rotated(lp.phi_b[r][c], rot);
                let mut lo_a = LinExpr::new();
                lo_a.add(phi, 1.0);
                lo_a.add(x, -TAU);
                m.add_constraint(
                    lo_a,
                    Sense::Ge,
                    a - fov / 2.0 - TAU,
                    format!("2s:orient_tp_lo[t{t} c{c} r{r}]"),
                );
                let mut hi_a = LinExpr::new();
                hi_a.add(phi, 1.0);
                hi_a.add(x, TAU);
                m.add_constraint(
                    hi_a,
                    Sense::Le,
                    a + fov / 2.0 + TAU,
                    format!("2t:orient_tp_hi[t{t} c{c} r{r}]"),
                );
                let mut lo_b = LinExpr::new();
                lo_b.add(phi, 1.0);
                lo_b.add(x, -TAU);
                m.add_constraint(
                    lo_b,
                    Sense::Ge,
                    b - fov / 2.0 - TAU,
                    format!("2u:orient_bs_lo[t{t} c{c} r{r}]"),
                );
                let mut hi_b = LinExpr::new();
                hi_b.add(phi, 1.0);
                hi_b.add(x, TAU);
                m.add_constraint(
                    hi_b,
                    Sense::Le,
                    b + fov / 2.0 + TAU,
                    format!("2v:orient_bs_hi[t{t} c{c} r{r}]"),
                );
            }
        }
    }

    if ptf {
        // (3b) extra-traffic flow balance, per user and site.
        for t in 0..nt {
            for c in 0..n {
                let mut e = LinExpr::new();
                e.add(vm.w_x_id(t, c), 1.0);
                for d in 0..n {
                    e.add(vm.f_x_id(t, d, c), 1.0);
                    e.add(vm.f_x_id(t, c, d), -1.0);
                }
                for r in 0..n {
                    e.add(vm.g_x_id(t, c, r), -1.0);
                }
                m.add_constraint(e, Sense::Eq, 0.0, format!("3b:x_flow_balance[t{t} c{c}]"));
            }
        }
        // (3c) extra backhaul flow only on activated links.
        for t in 0..nt {
            for c in 0..n {
                for d in 0..n {
                    let mut e = LinExpr::new();
                    e.add(vm.f_x_id(t, c, d), 1.0);
                    e.add(vm.z_id(c, d), -lp.cap_bh[c][d]);
                    m.add_constraint(e, Sense::Le, 0.0, format!("3c:x_bh_flow_cap[t{t} c{c} d{d}]"));
                }
            }
        }
        // (3d) extra serving flow only on the user's active option.
        for t in 0..nt {
            for c in 0..n {
                for r in 0..n {
                    let mut e = LinExpr::new();
                    e.add(vm.g_x_id(t, c, r), 1.0);
                    e.add(vm.x_id(t, c, r), -lp.cap_src[t][c][r]);
                    m.add_constraint(e, Sense::Le, 0.0, format!("3d:x_src_cap[t{t} c{c} r{r}]"));
                }
            }
        }
        // (3e) extra donor ingress bounded by the core capacity.
        for t in 0..nt {
            for c in 0..n {
                let mut e = LinExpr::new();
                e.add(vm.w_x_id(t, c), 1.0);
                e.add(vm.y_don[c], -lp.m_max);
                m.add_constraint(e, Sense::Le, 0.0, format!("3e:x_donor_ingress_cap[t{t} c{c}]"));
            }
        }
        // (3f) residual timeshare at a serving base station: extra access
        // plus extra inbound backhaul fit in what guaranteed traffic left.
        for c in 0..n {
            for t in 0..nt {
                let mut e = LinExpr::new();
                for r in 0..n {
                    if lp.delta_src[t][c][r] {
                        e.add(vm.g_x_id(t, c, r), 1.0 / lp.cap_src[t][c][r]);
                    }
                }
                for d in 0..n {
                    if lp.delta_bh[d][c] {
                        e.add(vm.f_x_id(t, d, c), 1.0 / lp.cap_bh[d][c]);
                    }
                }
                e.add(vm.t_tx[c], 1.0);
                e.add(vm.t_rx[c], 1.0);
                e.add(vm.y_iab[c], -1.0);
                m.add_constraint(e, Sense::Le, 0.0, format!("3f:x_access_residual[c{c} t{t}]"));
            }
        }
        // (3g) residual timeshare at a forwarding base station.
        for c in 0..n {
            for t in 0..nt {
                let mut e = LinExpr::new();
                for d in 0..n {
                    if lp.delta_bh[d][c] {
                        e.add(vm.f_x_id(t, d, c), 1.0 / lp.cap_bh[d][c]);
                    }
                    if lp.delta_bh[c][d] {
                        e.add(vm.f_x_id(t, c, d), 1.0 / lp.cap_bh[c][d]);
                    }
                }
                e.add(vm.t_tx[c], 1.0);
                e.add(vm.t_rx[c], 1.0);
                e.add(vm.y_iab[c], -1.0);
                m.add_constraint(e, Sense::Le, 0.0, format!("3g:x_bh_residual[c{c} t{t}]"));
            }
        }
        // (3h) surface residual: extra reflections fit in the timeshare the
        // guaranteed traffic leaves on the surface.
        for r in 0..n {
            if r == fake {
                continue;
            }
            for t in 0..nt {
                let mut e = LinExpr::new();
                for c in 0..n {
                    if lp.delta_src[t][c][r] {
                        e.add(vm.g_x_id(t, c, r), 1.0 / lp.cap_ris[t][c][r]);
                    }
                }
                for tau in 0..nt {
                    for c in 0..n {
                        if lp.delta_src[tau][c][r] {
                            e.add(vm.x_id(tau, c, r), demand / lp.cap_ris[tau][c][r]);
                        }
                    }
                }
                e.add(vm.y_ris[r], -1.0);
                m.add_constraint(e, Sense::Le, 0.0, format!("3h:x_ris_residual[r{r} t{t}]"));
            }
        }
    }

    debug_assert_eq!(m.vars.len(), VarMap::expected_vars(form, n, nt));
    debug_assert_eq!(vm.total_vars(), m.vars.len());
    m.validate()?;
    Ok((m, vm))
}

/// Rewrites every core-capacity constraint with `fraction * M^MAX`,
/// leaving the rest of the model untouched. Shrinking the donor ingress
/// forces bottlenecks elsewhere, which is the heuristic's point.
pub fn apply_forced_bottleneck(model: &Model, varmap: &VarMap, fraction: f64) -> Model {
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "bottleneck fraction must lie in (0, 1], got {fraction}"
    );
    let mut is_don = vec![false; model.vars.len()];
    for &id in &varmap.y_don {
        is_don[id] = true;
    }
    let mut out = model.clone();
    for con in &mut out.constraints {
        if con.label.starts_with("2o:") || con.label.starts_with("3e:") {
            for term in &mut con.expr.terms {
                if is_don[term.0] {
                    term.1 *= fraction;
                }
            }
        }
    }
    out
}
