//! Network planning formulations and plan handling.
//!
//! This module turns a scenario plus precomputed link parameters into the
//! two deployment MILPs — mean-throughput (MTF) and peak-throughput (PTF) —
//! applies the forced-bottleneck heuristic, decodes solver output into a
//! [`Plan`], re-checks feasibility arithmetically, and cross-evaluates the
//! mean/peak metrics of a fixed topology. A brute-force enumeration oracle
//! covers tiny instances for verification.

mod build;
mod check;
mod decode;
mod eval;
mod oracle;

pub use build::{apply_forced_bottleneck, build_mtf, build_ptf};
pub use check::check_feasibility;
pub use decode::decode;
pub use eval::{evaluate_mean, evaluate_peak, evaluate_peak_opts};
pub use oracle::brute_force_oracle;

use crate::channel::LinkParameters;
use crate::milp::MilpError;
use crate::scenario::{wrap_angle, Scenario};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid planning input: {0}")]
    Input(String),
    #[error("test point {0} has no activatable serving option; demand cannot be met at any budget")]
    UnservableTestPoint(usize),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("decode: {0}")]
    Decode(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("oracle: {0}")]
    Oracle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Mean-throughput: maximize the summed guaranteed flows.
    Mtf,
    /// Peak-throughput: guaranteed flows pinned at the demand, maximize the
    /// summed per-user extra flows.
    Ptf,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Mtf => "mtf",
            Formulation::Ptf => "ptf",
        })
    }
}

/// Everything a formulation needs: geometry, link parameters, economics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanningInput {
    pub scenario: Scenario,
    pub link_params: LinkParameters,
    /// Budget B in cost units.
    pub budget: f64,
    /// Per-user guaranteed demand D, Mb/s.
    pub demand_mbps: f64,
    /// Price of an IAB node.
    pub price_iab: f64,
    /// Price of a reflective surface.
    pub price_ris: f64,
}

impl PlanningInput {
    pub fn n_sites(&self) -> usize {
        self.scenario.sites.len()
    }

    pub fn n_tps(&self) -> usize {
        self.scenario.test_points.len()
    }

    pub fn donor(&self) -> usize {
        self.scenario.donor_index()
    }

    pub fn fake(&self) -> usize {
        self.scenario.fake_ris_index()
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        self.scenario.validate().map_err(|e| PlannerError::Input(e.to_string()))?;
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(PlannerError::Input("budget must be nonnegative and finite".into()));
        }
        if !(self.demand_mbps > 0.0 && self.demand_mbps.is_finite()) {
            return Err(PlannerError::Input("demand must be positive and finite".into()));
        }
        if !(self.price_iab > 0.0 && self.price_iab.is_finite())
            || !(self.price_ris > 0.0 && self.price_ris.is_finite())
        {
            return Err(PlannerError::Input("prices must be positive and finite".into()));
        }
        let n = self.n_sites();
        let nt = self.n_tps();
        let lp = &self.link_params;
        let dims_ok = lp.delta_bh.len() == n
            && lp.delta_bh.iter().all(|r| r.len() == n)
            && lp.cap_bh.len() == n
            && lp.delta_src.len() == nt
            && lp.delta_src.iter().all(|m| m.len() == n && m.iter().all(|r| r.len() == n))
            && lp.cap_src.len() == nt
            && lp.cap_ris.len() == nt
            && lp.phi_a.len() == n
            && lp.phi_a.iter().all(|r| r.len() == nt)
            && lp.phi_b.len() == n
            && lp.phi_b.iter().all(|r| r.len() == n);
        if !dims_ok {
            return Err(PlannerError::Input(
                "link parameter matrices do not match the scenario dimensions".into(),
            ));
        }
        if !(lp.fov_rad > 0.0 && lp.fov_rad <= TAU) {
            return Err(PlannerError::Input("field of view must lie in (0, 2*pi]".into()));
        }
        Ok(())
    }
}

/// Maps every formulation variable family to solver variable ids.
///
/// Index layouts: `x`/`g`/`g_x` are `[t][c][r]` flattened as
/// `(t*n + c)*n + r`; `z`/`f` are `[c][d]` flattened as `c*n + d`;
/// `f_x` is `[t][c][d]`; `w_x` is `[t][c]`. Families absent from a
/// formulation are empty vectors.
#[derive(Debug, Clone)]
pub struct VarMap {
    pub formulation: Formulation,
    pub n_sites: usize,
    pub n_tps: usize,
    pub y_don: Vec<usize>,
    pub y_iab: Vec<usize>,
    pub y_ris: Vec<usize>,
    pub x: Vec<usize>,
    pub z: Vec<usize>,
    pub f: Vec<usize>,
    /// Guaranteed flows; empty under PTF (substituted by demand * x).
    pub g: Vec<usize>,
    pub w: Vec<usize>,
    pub t_tx: Vec<usize>,
    pub t_rx: Vec<usize>,
    pub phi: Vec<usize>,
    pub f_x: Vec<usize>,
    pub g_x: Vec<usize>,
    pub w_x: Vec<usize>,
    /// Per-site frame rotation subtracted from every bearing before the
    /// orientation constraints were emitted; decode adds it back.
    pub phi_rotation: Vec<f64>,
}

impl VarMap {
    #[inline]
    pub fn x_id(&self, t: usize, c: usize, r: usize) -> usize {
        self.x[(t * self.n_sites + c) * self.n_sites + r]
    }

    #[inline]
    pub fn z_id(&self, c: usize, d: usize) -> usize {
        self.z[c * self.n_sites + d]
    }

    #[inline]
    pub fn f_id(&self, c: usize, d: usize) -> usize {
        self.f[c * self.n_sites + d]
    }

    #[inline]
    pub fn g_id(&self, t: usize, c: usize, r: usize) -> usize {
        debug_assert!(!self.g.is_empty(), "guaranteed flows are substituted out under PTF");
        self.g[(t * self.n_sites + c) * self.n_sites + r]
    }

    #[inline]
    pub fn f_x_id(&self, t: usize, c: usize, d: usize) -> usize {
        self.f_x[(t * self.n_sites + c) * self.n_sites + d]
    }

    #[inline]
    pub fn g_x_id(&self, t: usize, c: usize, r: usize) -> usize {
        self.g_x[(t * self.n_sites + c) * self.n_sites + r]
    }

    #[inline]
    pub fn w_x_id(&self, t: usize, c: usize) -> usize {
        self.w_x[t * self.n_sites + c]
    }

    pub fn total_vars(&self) -> usize {
        self.y_don.len()
            + self.y_iab.len()
            + self.y_ris.len()
            + self.x.len()
            + self.z.len()
            + self.f.len()
            + self.g.len()
            + self.w.len()
            + self.t_tx.len()
            + self.t_rx.len()
            + self.phi.len()
            + self.f_x.len()
            + self.g_x.len()
            + self.w_x.len()
    }

    /// Closed-form variable count implied by the set sizes.
    pub fn expected_vars(formulation: Formulation, n_sites: usize, n_tps: usize) -> usize {
        let n = n_sites;
        let t = n_tps;
        let shared = 3 * n + t * n * n + 2 * n * n + 4 * n; // y*, x, z+f, w+tTX+tRX+phi
        match formulation {
            Formulation::Mtf => shared + t * n * n, // g
            Formulation::Ptf => shared + t * n * n + t * n * n + t * n, // fX, gX, wX
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstalledKind {
    Donor,
    Iab,
    Ris,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEdge {
    pub from: usize,
    pub to: usize,
    /// Guaranteed backhaul flow on the edge, Mb/s.
    pub flow_mbps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SrcAssignment {
    pub tp: usize,
    pub bs: usize,
    /// Serving surface site; the virtual site marks a direct link.
    pub ris: usize,
    /// Guaranteed flow g, Mb/s.
    pub guaranteed_mbps: f64,
    /// Extra peak flow reaching this user (peak formulation only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extra_mbps: Option<f64>,
}

/// Per-user extra backhaul flow on one tree edge (peak formulation only);
/// kept in the plan so the independent checker can re-verify extra-traffic
/// conservation without re-solving anything.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtraEdgeFlow {
    pub tp: usize,
    pub from: usize,
    pub to: usize,
    pub mbps: f64,
}

/// A decoded deployment: which devices to install, the backhaul tree, who
/// serves whom, and the resource split that carries it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plan {
    pub formulation: Formulation,
    /// Per-site install decision (the virtual direct-path site shows as a
    /// surface; it costs nothing and has no orientation).
    pub installed: Vec<InstalledKind>,
    pub tree_edges: Vec<TreeEdge>,
    pub src_assignments: Vec<SrcAssignment>,
    /// Transmission timeshare per site.
    pub tx_timeshare: Vec<f64>,
    /// Reception timeshare per site.
    pub rx_timeshare: Vec<f64>,
    /// Orientation (radians) per site; set only for installed real surfaces.
    pub ris_orientation: Vec<Option<f64>>,
    /// Guaranteed traffic entering the network at the donor, Mb/s.
    pub donor_ingress_mbps: f64,
    /// Per-user extra traffic entering at the donor (peak formulation only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub donor_extra_ingress_mbps: Option<Vec<f64>>,
    /// Per-user extra backhaul flows (peak formulation only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub extra_flows: Vec<ExtraEdgeFlow>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
}

impl Plan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PlannerError> {
        serde_json::from_str(text).map_err(|e| PlannerError::Decode(format!("plan json: {e}")))
    }

    /// Number of priced devices (surfaces + IAB nodes, donor and virtual
    /// site excluded) per kind: (iab, ris).
    pub fn device_counts(&self, scenario: &Scenario) -> (usize, usize) {
        let donor = scenario.donor_index();
        let fake = scenario.fake_ris_index();
        let mut iab = 0;
        let mut ris = 0;
        for (c, k) in self.installed.iter().enumerate() {
            if c == donor || c == fake {
                continue;
            }
            match k {
                InstalledKind::Iab | InstalledKind::Donor => iab += 1,
                InstalledKind::Ris => ris += 1,
                InstalledKind::None => {}
            }
        }
        (iab, ris)
    }
}

/// Outcome of re-checking one constraint family arithmetically.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyCheck {
    /// Family label, e.g. "2q:half_duplex".
    pub family: String,
    pub pass: bool,
    /// Largest raw violation across the family (0 when satisfied).
    pub worst_residual: f64,
    /// Index of the worst row, e.g. "site 2" or "tp 1 bs 0 ris 3".
    pub worst_index: String,
    /// Indices of all offending rows (capped).
    pub offenders: Vec<String>,
    /// Rows evaluated.
    pub checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub families: Vec<FamilyCheck>,
    /// Non-fatal anomalies (e.g. a backhaul pair activated in both
    /// directions).
    pub warnings: Vec<String>,
    pub pass: bool,
    pub worst_residual: f64,
}

impl FeasibilityReport {
    pub fn family(&self, label: &str) -> Option<&FamilyCheck> {
        self.families.iter().find(|f| f.family == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Per-surface frame rotation that moves the 0/2pi seam into the middle of
/// the widest angular gap between the bearings the surface could ever have
/// to serve. The orientation window constraints are linear in a frame where
/// angles do not wrap; this choice keeps every potentially active window
/// clear of the seam whenever the gap is wide enough.
pub(crate) fn seam_rotations(input: &PlanningInput) -> Vec<f64> {
    let n = input.n_sites();
    let nt = input.n_tps();
    let fake = input.fake();
    let lp = &input.link_params;
    let mut rot = vec![0.0; n];
    for r in 0..n {
        if r == fake {
            continue;
        }
        let mut angles: Vec<f64> = Vec::new();
        for t in 0..nt {
            if (0..n).any(|c| lp.delta_src[t][c][r]) {
                angles.push(wrap_angle(lp.phi_a[r][t]));
            }
        }
        for c in 0..n {
            if (0..nt).any(|t| lp.delta_src[t][c][r]) {
                angles.push(wrap_angle(lp.phi_b[r][c]));
            }
        }
        if angles.is_empty() {
            continue;
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup();
        // Widest circular gap between consecutive bearings; the wrap gap
        // closes the circle. Ties resolve to the first in sorted order.
        let mut best_start = *angles.last().unwrap();
        let mut best_gap = angles[0] + TAU - angles.last().unwrap();
        for w in angles.windows(2) {
            let gap = w[1] - w[0];
            if gap > best_gap + 1e-12 {
                best_gap = gap;
                best_start = w[0];
            }
        }
        rot[r] = wrap_angle(best_start + best_gap / 2.0);
    }
    rot
}

/// Angle expressed in the rotated frame of surface `r`.
#[inline]
pub(crate) fn rotated(angle: f64, rotation: f64) -> f64 {
    wrap_angle(angle - rotation)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::channel::LinkParameters;
    use crate::scenario::{CandidateSite, Point3, Scenario, TestPoint};

    /// Scenario skeleton: donor site 0, real sites 1..n-1, virtual site
    /// last, test points on a line. Geometry is only used for bearings in
    /// hand fixtures; link parameters are set directly.
    pub fn skeleton(n_real: usize, n_tps: usize) -> Scenario {
        let n = n_real + 1; // plus the virtual site
        let mut sites = Vec::new();
        for c in 0..n {
            sites.push(CandidateSite {
                id: c,
                position: Point3::new(40.0 * c as f64, 10.0 * (c % 3) as f64, 20.0),
                is_donor_site: c == 0,
                is_fake_ris: c == n - 1,
            });
        }
        let test_points = (0..n_tps)
            .map(|t| TestPoint {
                id: t,
                position: Point3::new(15.0 + 30.0 * t as f64, 55.0, 1.5),
                body_orientation: 0.0,
            })
            .collect();
        Scenario {
            seed: 0,
            cell_center: Point3::new(0.0, 0.0, 0.0),
            cell_radius_m: 500.0,
            ris_height_m: 6.0,
            obstacles: vec![],
            sites,
            test_points,
        }
    }

    /// Empty (all-inactive) link parameters of the right shape.
    pub fn blank_links(n: usize, nt: usize) -> LinkParameters {
        LinkParameters {
            delta_bh: vec![vec![false; n]; n],
            cap_bh: vec![vec![0.0; n]; n],
            delta_src: vec![vec![vec![false; n]; n]; nt],
            cap_src: vec![vec![vec![0.0; n]; n]; nt],
            cap_ris: vec![vec![vec![0.0; n]; n]; nt],
            phi_a: vec![vec![0.0; nt]; n],
            phi_b: vec![vec![0.0; n]; n],
            m_max: 0.0,
            fov_rad: 2.0 * std::f64::consts::PI / 3.0,
            warnings: vec![],
        }
    }

    /// Marks a direct (virtual-surface) serving option.
    pub fn set_direct(lp: &mut LinkParameters, t: usize, c: usize, fake: usize, cap: f64) {
        lp.delta_src[t][c][fake] = true;
        lp.cap_src[t][c][fake] = cap;
        lp.cap_ris[t][c][fake] = f64::INFINITY;
    }

    /// Marks a reflected serving option through a real surface.
    pub fn set_reflected(
        lp: &mut LinkParameters,
        t: usize,
        c: usize,
        r: usize,
        cap: f64,
        cap_ris: f64,
    ) {
        lp.delta_src[t][c][r] = true;
        lp.cap_src[t][c][r] = cap;
        lp.cap_ris[t][c][r] = cap_ris;
    }

    pub fn set_bh(lp: &mut LinkParameters, c: usize, d: usize, cap: f64) {
        lp.delta_bh[c][d] = true;
        lp.cap_bh[c][d] = cap;
        lp.delta_bh[d][c] = true;
        lp.cap_bh[d][c] = cap;
    }

    /// Two test points, donor + one relay + virtual site. Direct donor
    /// links exist for both TPs; the relay improves TP 1.
    pub fn relay_input(budget: f64) -> PlanningInput {
        let scenario = skeleton(2, 2); // sites: 0 donor, 1 relay, 2 fake
        let n = 3;
        let nt = 2;
        let mut lp = blank_links(n, nt);
        set_bh(&mut lp, 0, 1, 2000.0);
        set_direct(&mut lp, 0, 0, 2, 800.0);
        set_direct(&mut lp, 1, 0, 2, 400.0);
        set_direct(&mut lp, 1, 1, 2, 900.0);
        lp.m_max = 10_000.0;
        PlanningInput {
            scenario,
            link_params: lp,
            budget,
            demand_mbps: 150.0,
            price_iab: 1.0,
            price_ris: 0.1,
        }
    }

    /// Donor + relay + surface site + virtual site, two TPs. TP 0 has a
    /// direct donor link and a reflected option via site 2; TP 1 is donor
    /// direct only.
    pub fn ris_input(budget: f64) -> PlanningInput {
        let scenario = skeleton(3, 2); // 0 donor, 1 relay, 2 surface, 3 fake
        let n = 4;
        let nt = 2;
        let mut lp = blank_links(n, nt);
        set_bh(&mut lp, 0, 1, 2500.0);
        set_direct(&mut lp, 0, 0, 3, 500.0);
        set_reflected(&mut lp, 0, 0, 2, 1200.0, 1500.0);
        set_direct(&mut lp, 1, 0, 3, 700.0);
        // Bearings from surface 2 towards TP 0 and the donor: close enough
        // to share one field of view.
        lp.phi_a[2][0] = 0.3;
        lp.phi_b[2][0] = 0.9;
        lp.m_max = 10_000.0;
        PlanningInput {
            scenario,
            link_params: lp,
            budget,
            demand_mbps: 150.0,
            price_iab: 1.0,
            price_ris: 0.1,
        }
    }

    /// Random small instance through the real generator + channel model.
    pub fn generated_input(seed: u64, n_sites: usize, n_tps: usize, budget: f64) -> PlanningInput {
        use crate::channel::{build_link_parameters, RadioConfig};
        use crate::scenario::{generate_instance, GenerationConfig};
        let gen = GenerationConfig {
            n_sites,
            n_test_points: n_tps,
            cell_radius_m: 110.0,
            seed,
            ..GenerationConfig::default()
        };
        let scenario = generate_instance(&gen).expect("generation succeeds");
        let links = build_link_parameters(&scenario, &RadioConfig::default())
            .expect("channel build succeeds");
        PlanningInput {
            scenario,
            link_params: links,
            budget,
            demand_mbps: 150.0,
            price_iab: 1.0,
            price_ris: 0.1,
        }
    }
}
