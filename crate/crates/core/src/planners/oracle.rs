//! Brute-force reference optimizer for tiny instances. Enumerates every
//! installation, every relay tree and every serving assignment, filters by
//! budget and orientation geometry, and prices each combination with a
//! small hand-assembled LP over the continuous rates. Deliberately shares
//! no code with the model builders apart from the seam-rotation helper, so
//! agreement between the two is meaningful evidence.

use super::{rotated, seam_rotations, Formulation, PlannerError, PlanningInput};
use crate::milp::{solve_lp_relaxation, LinExpr, Model, Sense, Status};

const MAX_SITES: usize = 6;
const MAX_TPS: usize = 4;

struct Topology<'a> {
    input: &'a PlanningInput,
    /// Sites acting as base stations, donor included.
    iab: Vec<bool>,
    /// Directed relay edges parent -> child, all endpoints reachable.
    edges: Vec<(usize, usize)>,
    /// Per test point: (serving base station, serving surface index).
    assign: Vec<(usize, usize)>,
}

fn mtf_value(top: &Topology) -> Option<f64> {
    let input = top.input;
    let lp = &input.link_params;
    let n = input.n_sites();
    let nt = input.n_tps();
    let donor = input.donor();
    let fake = input.fake();
    let mut m = Model::default();
    let g: Vec<usize> = (0..nt)
        .map(|t| {
            let (bs, r) = top.assign[t];
            m.continuous(input.demand_mbps, lp.cap_src[t][bs][r], format!("g{t}"))
        })
        .collect();
    let f: Vec<usize> = top
        .edges
        .iter()
        .map(|&(c, d)| m.continuous(0.0, lp.cap_bh[c][d], format!("f{c}_{d}")))
        .collect();
    let w = m.continuous(0.0, lp.m_max, "w");
    for c in 0..n {
        if !top.iab[c] {
            continue;
        }
        let mut balance = LinExpr::new();
        let mut time = LinExpr::new();
        if c == donor {
            balance.add(w, 1.0);
        }
        for (e, &(from, to)) in top.edges.iter().enumerate() {
            if to == c {
                balance.add(f[e], 1.0);
                time.add(f[e], 1.0 / lp.cap_bh[from][to]);
            }
            if from == c {
                balance.add(f[e], -1.0);
                time.add(f[e], 1.0 / lp.cap_bh[from][to]);
            }
        }
        for t in 0..nt {
            let (bs, r) = top.assign[t];
            if bs == c {
                balance.add(g[t], -1.0);
                time.add(g[t], 1.0 / lp.cap_src[t][bs][r]);
            }
        }
        m.add_constraint(balance, Sense::Eq, 0.0, format!("bal{c}"));
        m.add_constraint(time, Sense::Le, 1.0, format!("time{c}"));
    }
    for r in 0..n {
        if r == fake {
            continue;
        }
        let mut share = LinExpr::new();
        for t in 0..nt {
            let (bs, rr) = top.assign[t];
            if rr == r {
                share.add(g[t], 1.0 / lp.cap_ris[t][bs][r]);
            }
        }
        if !share.terms.is_empty() {
            m.add_constraint(share, Sense::Le, 1.0, format!("share{r}"));
        }
    }
    for &gt in &g {
        m.objective.add(gt, 1.0);
    }
    let sol = solve_lp_relaxation(&m).ok()?;
    match sol.status {
        Status::Optimal => Some(sol.objective),
        _ => None,
    }
}

fn ptf_value(top: &Topology) -> Option<f64> {
    let input = top.input;
    let lp = &input.link_params;
    let n = input.n_sites();
    let nt = input.n_tps();
    let donor = input.donor();
    let fake = input.fake();
    let demand = input.demand_mbps;

    // Guaranteed-side load is fully determined by the assignment; compute
    // the fixed timeshare pieces and reject combinations that already
    // overrun a node or a surface.
    for r in 0..n {
        if r == fake {
            continue;
        }
        let used: f64 = (0..nt)
            .filter(|&t| top.assign[t].1 == r)
            .map(|t| demand / lp.cap_ris[t][top.assign[t].0][r])
            .sum();
        if used > 1.0 + 1e-9 {
            return None;
        }
    }

    let mut m = Model::default();
    let f: Vec<usize> = top
        .edges
        .iter()
        .map(|&(c, d)| m.continuous(0.0, lp.cap_bh[c][d], format!("f{c}_{d}")))
        .collect();
    let w = m.continuous(0.0, lp.m_max, "w");
    let gx: Vec<usize> = (0..nt)
        .map(|t| {
            let (bs, r) = top.assign[t];
            m.continuous(0.0, lp.cap_src[t][bs][r], format!("gx{t}"))
        })
        .collect();
    let fx: Vec<Vec<usize>> = (0..nt)
        .map(|t| {
            top.edges
                .iter()
                .map(|&(c, d)| m.continuous(0.0, lp.cap_bh[c][d], format!("fx{t}_{c}_{d}")))
                .collect()
        })
        .collect();
    let wx: Vec<usize> = (0..nt).map(|t| m.continuous(0.0, lp.m_max, format!("wx{t}"))).collect();

    for c in 0..n {
        if !top.iab[c] {
            continue;
        }
        // Guaranteed flow balance: ingress + relay in − relay out = local demand.
        let mut balance = LinExpr::new();
        // Guaranteed tx+rx time at c; variable part plus constant part.
        let mut time = LinExpr::new();
        let mut time_const = 0.0;
        if c == donor {
            balance.add(w, 1.0);
        }
        for (e, &(from, to)) in top.edges.iter().enumerate() {
            if to == c {
                balance.add(f[e], 1.0);
                time.add(f[e], 1.0 / lp.cap_bh[from][to]);
            }
            if from == c {
                balance.add(f[e], -1.0);
                time.add(f[e], 1.0 / lp.cap_bh[from][to]);
            }
        }
        let mut local = 0.0;
        for t in 0..nt {
            let (bs, r) = top.assign[t];
            if bs == c {
                local += demand;
                time_const += demand / lp.cap_src[t][bs][r];
            }
        }
        m.add_constraint(balance, Sense::Eq, local, format!("bal{c}"));
        m.add_constraint(time.clone(), Sense::Le, 1.0 - time_const, format!("time{c}"));

        // Residual capacity rows, one pair per user.
        for t in 0..nt {
            let (bs, r) = top.assign[t];
            let mut access = time.clone();
            if bs == c {
                access.add(gx[t], 1.0 / lp.cap_src[t][bs][r]);
            }
            let mut backhaul = time.clone();
            for (e, &(from, to)) in top.edges.iter().enumerate() {
                if to == c {
                    access.add(fx[t][e], 1.0 / lp.cap_bh[from][to]);
                    backhaul.add(fx[t][e], 1.0 / lp.cap_bh[from][to]);
                }
                if from == c {
                    backhaul.add(fx[t][e], 1.0 / lp.cap_bh[from][to]);
                }
            }
            m.add_constraint(access, Sense::Le, 1.0 - time_const, format!("acc{c}_{t}"));
            m.add_constraint(backhaul, Sense::Le, 1.0 - time_const, format!("bh{c}_{t}"));
        }

        // Per-user extra flow balance at c.
        for t in 0..nt {
            let mut xb = LinExpr::new();
            if c == donor {
                xb.add(wx[t], 1.0);
            }
            for (e, &(from, to)) in top.edges.iter().enumerate() {
                if to == c {
                    xb.add(fx[t][e], 1.0);
                }
                if from == c {
                    xb.add(fx[t][e], -1.0);
                }
            }
            if top.assign[t].0 == c {
                xb.add(gx[t], -1.0);
            }
            m.add_constraint(xb, Sense::Eq, 0.0, format!("xbal{c}_{t}"));
        }
    }

    // Surface time budget: guaranteed share of everyone plus one user's extra.
    for r in 0..n {
        if r == fake {
            continue;
        }
        let guaranteed: f64 = (0..nt)
            .filter(|&t| top.assign[t].1 == r)
            .map(|t| demand / lp.cap_ris[t][top.assign[t].0][r])
            .sum();
        for t in 0..nt {
            let (bs, rr) = top.assign[t];
            if rr != r {
                continue;
            }
            let mut share = LinExpr::new();
            share.add(gx[t], 1.0 / lp.cap_ris[t][bs][r]);
            m.add_constraint(share, Sense::Le, 1.0 - guaranteed, format!("xshare{r}_{t}"));
        }
    }

    for &v in &gx {
        m.objective.add(v, 1.0);
    }
    let sol = solve_lp_relaxation(&m).ok()?;
    match sol.status {
        Status::Optimal => Some(sol.objective),
        _ => None,
    }
}

/// Exhaustive optimum for instances with at most 6 sites and 4 test
/// points. Returns the best objective value (summed guaranteed rates for
/// the mean formulation, summed extra rates for the peak one).
pub fn brute_force_oracle(
    input: &PlanningInput,
    formulation: Formulation,
) -> Result<f64, PlannerError> {
    input.validate()?;
    let n = input.n_sites();
    let nt = input.n_tps();
    if n > MAX_SITES || nt > MAX_TPS {
        return Err(PlannerError::Oracle(format!(
            "exhaustive search is limited to {MAX_SITES} sites and {MAX_TPS} test points, got {n} and {nt}"
        )));
    }
    for t in 0..nt {
        if !input.link_params.tp_has_access(t) {
            return Err(PlannerError::UnservableTestPoint(t));
        }
    }
    let lp = &input.link_params;
    let donor = input.donor();
    let fake = input.fake();
    let rotations = seam_rotations(input);
    let half_window = lp.fov_rad / 2.0 + 1e-9;
    let flex: Vec<usize> = (0..n).filter(|&c| c != donor && c != fake).collect();

    let mut best: Option<f64> = None;
    // Roles for the flexible sites: 0 = unused, 1 = relay, 2 = surface.
    let n_roles = 3usize.pow(flex.len() as u32);
    for role_code in 0..n_roles {
        let mut code = role_code;
        let mut iab = vec![false; n];
        let mut ris = vec![false; n];
        iab[donor] = true;
        ris[fake] = true;
        let mut cost = 0.0;
        for &c in &flex {
            match code % 3 {
                1 => {
                    iab[c] = true;
                    cost += input.price_iab;
                }
                2 => {
                    ris[c] = true;
                    cost += input.price_ris;
                }
                _ => {}
            }
            code /= 3;
        }
        if cost > input.budget + 1e-9 {
            continue;
        }

        // Relay trees: each non-donor base station picks a feed or stays
        // detached. Detached stations simply serve nobody.
        let children: Vec<usize> = (0..n).filter(|&c| iab[c] && c != donor).collect();
        let parent_options: Vec<Vec<Option<usize>>> = children
            .iter()
            .map(|&c| {
                let mut opts = vec![None];
                opts.extend(
                    (0..n).filter(|&d| iab[d] && d != c && lp.delta_bh[d][c]).map(Some),
                );
                opts
            })
            .collect();
        let n_trees: usize = parent_options.iter().map(|o| o.len()).product();
        for tree_code in 0..n_trees {
            let mut code = tree_code;
            let mut parent: Vec<Option<usize>> = vec![None; n];
            for (i, &c) in children.iter().enumerate() {
                let opts = &parent_options[i];
                parent[c] = opts[code % opts.len()];
                code /= opts.len();
            }
            // Reachability from the donor along parent links.
            let mut reach = vec![false; n];
            reach[donor] = true;
            loop {
                let mut grew = false;
                for &c in &children {
                    if !reach[c] {
                        if let Some(p) = parent[c] {
                            if reach[p] {
                                reach[c] = true;
                                grew = true;
                            }
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            let edges: Vec<(usize, usize)> = children
                .iter()
                .filter_map(|&c| parent[c].filter(|_| reach[c]).map(|p| (p, c)))
                .collect();
            // Skip trees with unreachable feeds: the same service is
            // available with those links dropped, which is another code.
            if edges.len() != children.iter().filter(|&&c| parent[c].is_some()).count() {
                continue;
            }

            // Serving candidates per test point under this installation.
            let cands: Vec<Vec<(usize, usize)>> = (0..nt)
                .map(|t| {
                    let mut v = Vec::new();
                    for c in 0..n {
                        if !iab[c] || !reach[c] {
                            continue;
                        }
                        for r in 0..n {
                            if lp.delta_src[t][c][r]
                                && ris[r]
                                && lp.cap_src[t][c][r] >= input.demand_mbps
                            {
                                v.push((c, r));
                            }
                        }
                    }
                    v
                })
                .collect();
            if cands.iter().any(|v| v.is_empty()) {
                continue;
            }
            let n_assigns: usize = cands.iter().map(|v| v.len()).product();
            for assign_code in 0..n_assigns {
                let mut code = assign_code;
                let mut assign = Vec::with_capacity(nt);
                for v in &cands {
                    assign.push(v[code % v.len()]);
                    code /= v.len();
                }
                if !orientation_ok(input, &rotations, &assign, fake, half_window) {
                    continue;
                }
                let top = Topology { input, iab: iab.clone(), edges: edges.clone(), assign };
                let value = match formulation {
                    Formulation::Mtf => mtf_value(&top),
                    Formulation::Ptf => ptf_value(&top),
                };
                if let Some(v) = value {
                    if best.is_none_or(|b| v > b) {
                        best = Some(v);
                    }
                }
            }
        }
    }
    best.ok_or_else(|| {
        PlannerError::Oracle("no feasible deployment within the budget".to_string())
    })
}

/// A surface can serve a set of users only if every involved bearing fits
/// inside one field of view. Tested in the same rotated frame the model
/// uses, so the two feasible sets coincide exactly.
fn orientation_ok(
    input: &PlanningInput,
    rotations: &[f64],
    assign: &[(usize, usize)],
    fake: usize,
    half_window: f64,
) -> bool {
    let lp = &input.link_params;
    for r in 0..input.n_sites() {
        if r == fake {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, &(bs, rr)) in assign.iter().enumerate() {
            if rr != r {
                continue;
            }
            for a in [rotated(lp.phi_a[r][t], rotations[r]), rotated(lp.phi_b[r][bs], rotations[r])]
            {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        if hi > lo && hi - lo > 2.0 * half_window {
            return false;
        }
    }
    true
}
