//! Independent feasibility audit of a plan. Reconstructs the decision
//! variables from the plan alone and re-evaluates every constraint family
//! with plain arithmetic — no solver, no model objects — so a bug in the
//! formulation or the decoder cannot hide itself.

use super::{FamilyCheck, FeasibilityReport, InstalledKind, Plan, PlanningInput};
use crate::scenario::angle_dist;
use crate::tol::RESIDUAL_TOL;

const MAX_OFFENDERS: usize = 16;

/// One constraint family being accumulated. Residuals are raw constraint
/// violations (lhs − rhs for ≤, |lhs − rhs| for =), not normalized.
struct Family {
    out: FamilyCheck,
}

impl Family {
    fn new(label: &str) -> Self {
        Family {
            out: FamilyCheck {
                family: label.to_string(),
                pass: true,
                worst_residual: 0.0,
                worst_index: String::new(),
                offenders: Vec::new(),
                checked: 0,
            },
        }
    }

    fn record(&mut self, residual: f64, rhs: f64, index: String) {
        self.out.checked += 1;
        let tol = RESIDUAL_TOL * (1.0 + rhs.abs());
        if residual > self.out.worst_residual {
            self.out.worst_residual = residual;
            self.out.worst_index = index.clone();
        }
        if residual > tol {
            self.out.pass = false;
            if self.out.offenders.len() < MAX_OFFENDERS {
                self.out.offenders.push(format!("{index}: residual {residual:.6}"));
            }
        }
    }

    /// lhs ≤ rhs
    fn le(&mut self, lhs: f64, rhs: f64, index: String) {
        self.record(lhs - rhs, rhs, index);
    }

    /// lhs = rhs
    fn eq(&mut self, lhs: f64, rhs: f64, index: String) {
        self.record((lhs - rhs).abs(), rhs, index);
    }
}

struct Reconstruction {
    y_don: Vec<f64>,
    y_iab: Vec<f64>,
    y_ris: Vec<f64>,
    /// z[c][d] and the guaranteed flow riding on it.
    z: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    /// Per TP: (bs, ris, guaranteed, extra).
    assign: Vec<(usize, usize, f64, f64)>,
    w: Vec<f64>,
    /// Per TP per site: extra ingress at the donor.
    wx: Vec<Vec<f64>>,
    /// Per TP: fx[t][c][d].
    fx: Vec<Vec<Vec<f64>>>,
}

fn reconstruct(plan: &Plan, input: &PlanningInput) -> Result<Reconstruction, String> {
    let n = input.n_sites();
    let nt = input.n_tps();
    if plan.installed.len() != n {
        return Err(format!("plan covers {} sites, input has {n}", plan.installed.len()));
    }
    if plan.src_assignments.len() != nt {
        return Err(format!(
            "plan carries {} serving assignments, input has {nt} test points",
            plan.src_assignments.len()
        ));
    }
    if plan.tx_timeshare.len() != n || plan.rx_timeshare.len() != n || plan.ris_orientation.len() != n
    {
        return Err("timeshare/orientation vectors do not match the site count".into());
    }
    let mut y_don = vec![0.0; n];
    let mut y_iab = vec![0.0; n];
    let mut y_ris = vec![0.0; n];
    for (c, kind) in plan.installed.iter().enumerate() {
        match kind {
            InstalledKind::Donor => {
                y_don[c] = 1.0;
                y_iab[c] = 1.0;
            }
            InstalledKind::Iab => y_iab[c] = 1.0,
            InstalledKind::Ris => y_ris[c] = 1.0,
            InstalledKind::None => {}
        }
    }
    let mut z = vec![vec![0.0; n]; n];
    let mut f = vec![vec![0.0; n]; n];
    for e in &plan.tree_edges {
        if e.from >= n || e.to >= n {
            return Err(format!("tree edge {}->{} is out of range", e.from, e.to));
        }
        z[e.from][e.to] = 1.0;
        f[e.from][e.to] = e.flow_mbps;
    }
    let mut assign = Vec::with_capacity(nt);
    let mut seen = vec![false; nt];
    for a in &plan.src_assignments {
        if a.tp >= nt || a.bs >= n || a.ris >= n {
            return Err(format!("assignment (tp {}, bs {}, ris {}) is out of range", a.tp, a.bs, a.ris));
        }
        if seen[a.tp] {
            return Err(format!("test point {} is assigned twice", a.tp));
        }
        seen[a.tp] = true;
        assign.push((a.bs, a.ris, a.guaranteed_mbps, a.extra_mbps.unwrap_or(0.0)));
    }
    // Re-order by test point id so assign[t] is t's row.
    let mut by_tp = vec![(0usize, 0usize, 0.0, 0.0); nt];
    for (a, slot) in plan.src_assignments.iter().zip(assign) {
        by_tp[a.tp] = slot;
    }
    if let Some(t) = seen.iter().position(|s| !s) {
        return Err(format!("test point {t} has no serving assignment"));
    }
    let mut w = vec![0.0; n];
    w[input.donor()] = plan.donor_ingress_mbps;
    let mut wx = vec![vec![0.0; n]; nt];
    if let Some(extra) = &plan.donor_extra_ingress_mbps {
        if extra.len() != nt {
            return Err("per-user donor ingress does not match the test point count".into());
        }
        for t in 0..nt {
            wx[t][input.donor()] = extra[t];
        }
    }
    let mut fx = vec![vec![vec![0.0; n]; n]; nt];
    for e in &plan.extra_flows {
        if e.tp >= nt || e.from >= n || e.to >= n {
            return Err(format!("extra flow (tp {}, {}->{}) is out of range", e.tp, e.from, e.to));
        }
        fx[e.tp][e.from][e.to] += e.mbps;
    }
    Ok(Reconstruction { y_don, y_iab, y_ris, z, f, assign: by_tp, w, wx, fx })
}

/// Audits every constraint family against the plan. Failures land in the
/// report, never in an error: a malformed plan yields a failed
/// `shape:consistency` family instead.
pub fn check_feasibility(plan: &Plan, input: &PlanningInput) -> FeasibilityReport {
    let mut families: Vec<FamilyCheck> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    let rec = match reconstruct(plan, input) {
        Ok(r) => r,
        Err(msg) => {
            let mut fam = Family::new("shape:consistency");
            fam.record(f64::INFINITY, 0.0, msg);
            families.push(fam.out);
            return finish(families, warnings);
        }
    };

    let n = input.n_sites();
    let nt = input.n_tps();
    let donor = input.donor();
    let fake = input.fake();
    let lp = &input.link_params;
    let demand = input.demand_mbps;
    let has_extras = plan.donor_extra_ingress_mbps.is_some() || !plan.extra_flows.is_empty();

    // Mutual exclusion and donor structure.
    let mut fam = Family::new("2b:iab_ris_mutex");
    for c in 0..n {
        fam.le(rec.y_iab[c] + rec.y_ris[c], 1.0, format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2c:donor_promotion");
    for c in 0..n {
        fam.le(rec.y_don[c], rec.y_iab[c], format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2d:single_donor");
    fam.le(rec.y_don.iter().sum(), 1.0, "all sites".into());
    families.push(fam.out);

    let mut fam = Family::new("2e:fake_ris_installed");
    fam.le(1.0, rec.y_ris[fake], format!("c{fake}"));
    families.push(fam.out);

    let mut fam = Family::new("2f:donor_installed");
    fam.le(1.0, rec.y_don[donor], format!("c{donor}"));
    families.push(fam.out);

    // Link activation.
    let mut fam = Family::new("2g:bh_link_act");
    for c in 0..n {
        for d in 0..n {
            let gate = if lp.delta_bh[c][d] { 1.0 } else { 0.0 };
            fam.le(
                rec.z[c][d],
                gate * (rec.y_iab[c] + rec.y_iab[d]) / 2.0,
                format!("c{c} d{d}"),
            );
        }
    }
    families.push(fam.out);

    let mut fam = Family::new("2h:src_act");
    for (t, &(bs, ris, _, _)) in rec.assign.iter().enumerate() {
        let gate = if lp.delta_src[t][bs][ris] { 1.0 } else { 0.0 };
        fam.le(1.0, gate * (rec.y_iab[bs] + rec.y_ris[ris]) / 2.0, format!("t{t} c{bs} r{ris}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2i:one_src");
    for t in 0..nt {
        // Reconstruction guarantees exactly one; recorded for completeness.
        fam.eq(1.0, 1.0, format!("t{t}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2j:tree_indegree");
    for c in 0..n {
        let indeg: f64 = (0..n).map(|d| rec.z[d][c]).sum();
        fam.le(indeg + rec.y_don[c], 1.0, format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2k:budget");
    let mut spend = 0.0;
    for c in 0..n {
        if c == donor || c == fake {
            continue;
        }
        spend += input.price_iab * rec.y_iab[c] + input.price_ris * rec.y_ris[c];
    }
    fam.le(spend, input.budget, "deployment".into());
    families.push(fam.out);

    // Guaranteed flow conservation and capacities.
    let mut fam = Family::new("2l:flow_balance");
    for c in 0..n {
        let inflow: f64 = (0..n).map(|d| rec.f[d][c]).sum();
        let outflow: f64 = (0..n).map(|d| rec.f[c][d]).sum();
        let served: f64 = rec
            .assign
            .iter()
            .filter(|&&(bs, _, _, _)| bs == c)
            .map(|&(_, _, g, _)| g)
            .sum();
        fam.eq(rec.w[c] + inflow - outflow, served, format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2m:bh_flow_cap");
    for c in 0..n {
        for d in 0..n {
            fam.le(rec.f[c][d], lp.cap_bh[c][d] * rec.z[c][d], format!("c{c} d{d}"));
        }
    }
    families.push(fam.out);

    let mut fam = Family::new("2n:src_demand");
    for (t, &(_, _, g, _)) in rec.assign.iter().enumerate() {
        fam.le(demand, g, format!("t{t}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2n:src_cap");
    for (t, &(bs, ris, g, _)) in rec.assign.iter().enumerate() {
        fam.le(g, lp.cap_src[t][bs][ris], format!("t{t} c{bs} r{ris}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2o:donor_ingress_cap");
    for c in 0..n {
        fam.le(rec.w[c], lp.m_max * rec.y_don[c], format!("c{c}"));
    }
    families.push(fam.out);

    // Timeshares.
    let mut fam = Family::new("2p:tx_time");
    for c in 0..n {
        let mut tx = 0.0;
        for d in 0..n {
            if lp.delta_bh[c][d] {
                tx += rec.f[c][d] / lp.cap_bh[c][d];
            } else if rec.f[c][d] > 0.0 {
                tx = f64::INFINITY;
            }
        }
        for (t, &(bs, ris, g, _)) in rec.assign.iter().enumerate() {
            if bs == c {
                if lp.delta_src[t][bs][ris] {
                    tx += g / lp.cap_src[t][bs][ris];
                } else if g > 0.0 {
                    tx = f64::INFINITY;
                }
            }
        }
        fam.eq(plan.tx_timeshare[c], tx, format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2q:rx_time");
    for c in 0..n {
        let mut rx = 0.0;
        for d in 0..n {
            if lp.delta_bh[d][c] {
                rx += rec.f[d][c] / lp.cap_bh[d][c];
            } else if rec.f[d][c] > 0.0 {
                rx = f64::INFINITY;
            }
        }
        fam.eq(plan.rx_timeshare[c], rx, format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2q:half_duplex");
    for c in 0..n {
        fam.le(plan.tx_timeshare[c] + plan.rx_timeshare[c], rec.y_iab[c], format!("c{c}"));
    }
    families.push(fam.out);

    let mut fam = Family::new("2r:ris_timeshare");
    for r in 0..n {
        if r == fake {
            continue;
        }
        let mut share = 0.0;
        for (t, &(bs, ris, g, _)) in rec.assign.iter().enumerate() {
            if ris == r {
                let cap = lp.cap_ris[t][bs][r];
                if cap.is_finite() && cap > 0.0 {
                    share += g / cap;
                } else if g > 0.0 {
                    share = f64::INFINITY;
                }
            }
        }
        fam.le(share, rec.y_ris[r], format!("r{r}"));
    }
    families.push(fam.out);

    // Orientation windows, evaluated with modular angle distance: the
    // reflective surface must see both the user and its serving base
    // station within half a field of view.
    let half_fov = lp.fov_rad / 2.0;
    let mut fam_tp = Family::new("2s-2t:orient_tp");
    let mut fam_bs = Family::new("2u-2v:orient_bs");
    for (t, &(bs, ris, _, _)) in rec.assign.iter().enumerate() {
        if ris == fake {
            continue;
        }
        match plan.ris_orientation[ris] {
            Some(phi) => {
                fam_tp.le(angle_dist(phi, lp.phi_a[ris][t]), half_fov, format!("t{t} r{ris}"));
                fam_bs.le(angle_dist(phi, lp.phi_b[ris][bs]), half_fov, format!("c{bs} r{ris}"));
            }
            None => {
                fam_tp.record(
                    f64::INFINITY,
                    half_fov,
                    format!("t{t} r{ris}: surface has no orientation"),
                );
            }
        }
    }
    families.push(fam_tp.out);
    families.push(fam_bs.out);

    // Per-user extra traffic, present only for peak-oriented plans.
    if has_extras {
        let mut fam = Family::new("3b:x_flow_balance");
        for t in 0..nt {
            for c in 0..n {
                let inflow: f64 = (0..n).map(|d| rec.fx[t][d][c]).sum();
                let outflow: f64 = (0..n).map(|d| rec.fx[t][c][d]).sum();
                let served = if rec.assign[t].0 == c { rec.assign[t].3 } else { 0.0 };
                fam.eq(rec.wx[t][c] + inflow - outflow, served, format!("t{t} c{c}"));
            }
        }
        families.push(fam.out);

        let mut fam = Family::new("3c:x_bh_flow_cap");
        for t in 0..nt {
            for c in 0..n {
                for d in 0..n {
                    if rec.fx[t][c][d] > 0.0 || rec.z[c][d] > 0.0 {
                        fam.le(
                            rec.fx[t][c][d],
                            lp.cap_bh[c][d] * rec.z[c][d],
                            format!("t{t} c{c} d{d}"),
                        );
                    }
                }
            }
        }
        families.push(fam.out);

        let mut fam = Family::new("3d:x_src_cap");
        for (t, &(bs, ris, _, extra)) in rec.assign.iter().enumerate() {
            fam.le(extra, lp.cap_src[t][bs][ris], format!("t{t} c{bs} r{ris}"));
        }
        families.push(fam.out);

        let mut fam = Family::new("3e:x_donor_ingress_cap");
        for t in 0..nt {
            for c in 0..n {
                fam.le(rec.wx[t][c], lp.m_max * rec.y_don[c], format!("t{t} c{c}"));
            }
        }
        families.push(fam.out);

        let mut fam = Family::new("3f:x_access_residual");
        for t in 0..nt {
            for c in 0..n {
                let mut used = plan.tx_timeshare[c] + plan.rx_timeshare[c];
                let (bs, ris, _, extra) = rec.assign[t];
                if bs == c {
                    let cap = lp.cap_src[t][bs][ris];
                    if cap > 0.0 {
                        used += extra / cap;
                    } else if extra > 0.0 {
                        used = f64::INFINITY;
                    }
                }
                for d in 0..n {
                    if lp.delta_bh[d][c] {
                        used += rec.fx[t][d][c] / lp.cap_bh[d][c];
                    } else if rec.fx[t][d][c] > 0.0 {
                        used = f64::INFINITY;
                    }
                }
                fam.le(used, rec.y_iab[c], format!("t{t} c{c}"));
            }
        }
        families.push(fam.out);

        let mut fam = Family::new("3g:x_bh_residual");
        for t in 0..nt {
            for c in 0..n {
                let mut used = plan.tx_timeshare[c] + plan.rx_timeshare[c];
                for d in 0..n {
                    if lp.delta_bh[d][c] {
                        used += rec.fx[t][d][c] / lp.cap_bh[d][c];
                    } else if rec.fx[t][d][c] > 0.0 {
                        used = f64::INFINITY;
                    }
                    if lp.delta_bh[c][d] {
                        used += rec.fx[t][c][d] / lp.cap_bh[c][d];
                    } else if rec.fx[t][c][d] > 0.0 {
                        used = f64::INFINITY;
                    }
                }
                fam.le(used, rec.y_iab[c], format!("t{t} c{c}"));
            }
        }
        families.push(fam.out);

        let mut fam = Family::new("3h:x_ris_residual");
        for r in 0..n {
            if r == fake {
                continue;
            }
            let mut guaranteed_share = 0.0;
            for (t, &(bs, ris, _, _)) in rec.assign.iter().enumerate() {
                if ris == r {
                    let cap = lp.cap_ris[t][bs][r];
                    if cap.is_finite() && cap > 0.0 {
                        guaranteed_share += demand / cap;
                    } else {
                        guaranteed_share = f64::INFINITY;
                    }
                }
            }
            for t in 0..nt {
                let (bs, ris, _, extra) = rec.assign[t];
                let mut used = guaranteed_share;
                if ris == r {
                    let cap = lp.cap_ris[t][bs][r];
                    if cap.is_finite() && cap > 0.0 {
                        used += extra / cap;
                    } else if extra > 0.0 {
                        used = f64::INFINITY;
                    }
                }
                fam.le(used, rec.y_ris[r], format!("t{t} r{r}"));
            }
        }
        families.push(fam.out);
    }

    // Structural warnings that are legal but suspicious.
    for c in 0..n {
        for d in (c + 1)..n {
            if rec.z[c][d] > 0.0 && rec.z[d][c] > 0.0 {
                warnings.push(format!(
                    "backhaul link between sites {c} and {d} is active in both directions"
                ));
            }
        }
    }
    for (c, kind) in plan.installed.iter().enumerate() {
        if matches!(kind, InstalledKind::Iab) {
            let carries: f64 = (0..n).map(|d| rec.f[c][d] + rec.f[d][c]).sum::<f64>()
                + rec
                    .assign
                    .iter()
                    .filter(|&&(bs, _, _, _)| bs == c)
                    .map(|&(_, _, g, _)| g)
                    .sum::<f64>();
            if carries <= 0.0 {
                warnings.push(format!("relay at site {c} is installed but carries no traffic"));
            }
        }
    }

    finish(families, warnings)
}

fn finish(families: Vec<FamilyCheck>, warnings: Vec<String>) -> FeasibilityReport {
    let pass = families.iter().all(|f| f.pass);
    let worst = families.iter().map(|f| f.worst_residual).fold(0.0, f64::max);
    FeasibilityReport { families, warnings, pass, worst_residual: worst }
}
