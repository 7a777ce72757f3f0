//! Link budgets and capacity tables.
//!
//! Everything the planners consume is precomputed here: backhaul activation
//! and capacity (Δ^BH-style flags, constant line-of-sight rates), access-link
//! activation and blockage-weighted capacity for every (test point, base
//! station, surface) triple, reflected-path rates, bearing tables for surface
//! orientation, and the donor throughput ceiling.
//!
//! The model is deliberately parametric: free-space path loss plus a fixed
//! aperture term for the reflective cascade, with blockage handled as a
//! four-state weighted average (nomadic obstacle yes/no x body shadow
//! yes/no). All constants live in [`RadioConfig`] so the whole model can be
//! re-calibrated from a config file without touching the planners.

// `!(x > 0.0)` rejects NaN along with nonpositive values; `x <= 0.0` would
// wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use crate::scenario::{
    azimuth, in_self_blockage, line_of_sight, CandidateSite, Point3, Scenario, TestPoint,
};
use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("SNR must be nonnegative, got {0}")]
    NegativeSnr(f64),
    #[error("invalid radio configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub donor_eirp_dbm: f64,
    pub node_eirp_dbm: f64,
    /// Receive-side aperture gain. One scalar is used for every receiver;
    /// array geometry is collapsed into the EIRP/gain pair.
    pub ue_gain_dbi: f64,
    /// Elements per side of the square reflective array.
    pub ris_elements: usize,
    pub noise_figure_db: f64,
    /// Field of view F of a reflective surface (radians).
    pub fov_rad: f64,
    /// Extra loss when a nomadic obstacle (vehicle, pedestrian) blocks an
    /// access leg.
    pub nomadic_loss_db: f64,
    /// Extra loss when the user's own body shadows the arrival direction.
    pub self_loss_db: f64,
    /// Probability per metre of 3D BS-UE distance that a nomadic obstacle
    /// interrupts the access link: p = min(1, coeff * distance).
    pub nomadic_coeff_per_m: f64,
    /// Width of the body-shadow sector behind the user (radians).
    pub self_sector_rad: f64,
    /// Maximum backhaul link length.
    pub max_link_range_m: f64,
    /// An access triple only activates when its weighted capacity (and, for
    /// real surfaces, the reflected-only rate) reaches this floor. Defaults
    /// to the per-user demand so every activated link can carry it alone.
    pub src_capacity_floor_mbps: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 28.0e9,
            bandwidth_hz: 200.0e6,
            donor_eirp_dbm: 58.0,
            node_eirp_dbm: 51.0,
            ue_gain_dbi: 6.0,
            ris_elements: 100,
            noise_figure_db: 7.0,
            fov_rad: 2.0 * std::f64::consts::PI / 3.0,
            nomadic_loss_db: 20.0,
            self_loss_db: 30.0,
            nomadic_coeff_per_m: 0.002,
            self_sector_rad: 2.0 * std::f64::consts::PI / 3.0,
            max_link_range_m: 300.0,
            src_capacity_floor_mbps: 150.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: &str| Err(ChannelError::InvalidConfig(msg.into()));
        if !(self.carrier_frequency_hz > 0.0) {
            return bad("carrier frequency must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.fov_rad > 0.0 && self.fov_rad <= 2.0 * std::f64::consts::PI) {
            return bad("fov must lie in (0, 2*pi]");
        }
        if !(self.self_sector_rad > 0.0 && self.self_sector_rad < 2.0 * std::f64::consts::PI) {
            return bad("self-blockage sector must lie in (0, 2*pi)");
        }
        if self.nomadic_loss_db < 0.0 || self.self_loss_db < 0.0 {
            return bad("blockage losses must be nonnegative");
        }
        if self.nomadic_coeff_per_m < 0.0 {
            return bad("nomadic blockage coefficient must be nonnegative");
        }
        if self.ris_elements < 1 {
            return bad("reflective array needs at least one element per side");
        }
        if !(self.max_link_range_m > 0.0) {
            return bad("max link range must be positive");
        }
        if self.src_capacity_floor_mbps < 0.0 {
            return bad("capacity floor must be nonnegative");
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.carrier_frequency_hz
    }

    /// Thermal noise floor: -174 dBm/Hz + 10*log10(bandwidth) + noise figure.
    pub fn noise_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Fixed aperture term of the reflective cascade, in dB:
    /// 20*log10(N^2 * lambda^2 / (4*pi)) with N the total element count
    /// (elements_per_side^2). Received power thus scales with the fourth
    /// power of the per-side count.
    pub fn aperture_gain_db(&self) -> f64 {
        let n_total = (self.ris_elements * self.ris_elements) as f64;
        let lambda = self.wavelength_m();
        20.0 * (n_total * n_total * lambda * lambda / (4.0 * std::f64::consts::PI)).log10()
    }

    /// Transmit EIRP of a site acting as a base station.
    pub fn eirp_dbm(&self, site: &CandidateSite) -> f64 {
        if site.is_donor_site {
            self.donor_eirp_dbm
        } else {
            self.node_eirp_dbm
        }
    }
}

/// One of the four access-link blockage states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockageState {
    pub nomadic_blocked: bool,
    pub self_blocked: bool,
}

impl BlockageState {
    pub const CLEAR: BlockageState =
        BlockageState { nomadic_blocked: false, self_blocked: false };

    /// All four states, clear first, both-blocked last.
    pub const ALL: [BlockageState; 4] = [
        BlockageState { nomadic_blocked: false, self_blocked: false },
        BlockageState { nomadic_blocked: true, self_blocked: false },
        BlockageState { nomadic_blocked: false, self_blocked: true },
        BlockageState { nomadic_blocked: true, self_blocked: true },
    ];

    /// Probability of this state under independent blockage events.
    pub fn weight(&self, p_nomadic: f64, p_self: f64) -> f64 {
        let pn = if self.nomadic_blocked { p_nomadic } else { 1.0 - p_nomadic };
        let ps = if self.self_blocked { p_self } else { 1.0 - p_self };
        pn * ps
    }
}

/// Free-space path loss in dB: 20*log10(4*pi*d*f/c).
pub fn path_loss_db(distance_m: f64, frequency_hz: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    Ok(pl_db(distance_m, frequency_hz))
}

fn pl_db(distance_m: f64, frequency_hz: f64) -> f64 {
    debug_assert!(distance_m > 0.0 && frequency_hz > 0.0);
    20.0 * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / SPEED_OF_LIGHT_M_S).log10()
}

/// Shannon rate in Mb/s: bandwidth * log2(1 + snr) / 1e6.
pub fn shannon_capacity_mbps(snr_linear: f64, bandwidth_hz: f64) -> Result<f64, ChannelError> {
    if snr_linear < 0.0 {
        return Err(ChannelError::NegativeSnr(snr_linear));
    }
    Ok(bandwidth_hz * (1.0 + snr_linear).log2() / 1.0e6)
}

/// Rate achieved by a received power level against the configured noise floor.
fn capacity_from_budget_dbm(budget_dbm: f64, cfg: &RadioConfig) -> f64 {
    let snr_db = budget_dbm - cfg.noise_dbm();
    let snr = 10.0_f64.powf(snr_db / 10.0);
    cfg.bandwidth_hz * (1.0 + snr).log2() / 1.0e6
}

/// Received power of the direct base-station-to-user link in a given
/// blockage state. Line-of-sight must hold (checked by the caller).
pub fn direct_budget_dbm(
    bs: &CandidateSite,
    tp: &TestPoint,
    state: BlockageState,
    cfg: &RadioConfig,
) -> f64 {
    let d = bs.position.dist3d(&tp.position);
    let mut budget = cfg.eirp_dbm(bs) + cfg.ue_gain_dbi - pl_db(d, cfg.carrier_frequency_hz);
    if state.nomadic_blocked {
        budget -= cfg.nomadic_loss_db;
    }
    if state.self_blocked {
        budget -= cfg.self_loss_db;
    }
    budget
}

pub fn direct_access_capacity(
    bs: &CandidateSite,
    tp: &TestPoint,
    state: BlockageState,
    cfg: &RadioConfig,
) -> f64 {
    capacity_from_budget_dbm(direct_budget_dbm(bs, tp, state, cfg), cfg)
}

/// Received power of the reflected cascade BS -> surface -> user.
///
/// The budget is EIRP + ue_gain + aperture - PL(d1) - PL(d2), minus blockage
/// losses. The body shadow affects the surface-to-user leg once; the nomadic
/// loss is applied per leg that dips below the surface mounting height
/// (ground-level obstacles cannot reach legs strung between rooftops), which
/// with standard heights means the surface-to-user leg only.
pub fn ris_cascade_budget_dbm(
    bs: &CandidateSite,
    ris_pos: &Point3,
    tp: &TestPoint,
    state: BlockageState,
    cfg: &RadioConfig,
) -> f64 {
    let d1 = bs.position.dist3d(ris_pos);
    let d2 = ris_pos.dist3d(&tp.position);
    let f = cfg.carrier_frequency_hz;
    let mut budget = cfg.eirp_dbm(bs) + cfg.ue_gain_dbi + cfg.aperture_gain_db()
        - pl_db(d1, f)
        - pl_db(d2, f);
    if state.nomadic_blocked {
        let mut exposed = 0.0;
        if bs.position.z.min(ris_pos.z) < ris_pos.z {
            exposed += 1.0;
        }
        if tp.position.z.min(ris_pos.z) < ris_pos.z {
            exposed += 1.0;
        }
        budget -= cfg.nomadic_loss_db * exposed;
    }
    if state.self_blocked {
        budget -= cfg.self_loss_db;
    }
    budget
}

pub fn ris_access_capacity(
    bs: &CandidateSite,
    ris_pos: &Point3,
    tp: &TestPoint,
    state: BlockageState,
    cfg: &RadioConfig,
) -> f64 {
    capacity_from_budget_dbm(ris_cascade_budget_dbm(bs, ris_pos, tp, state, cfg), cfg)
}

/// Elevation pre-check for a reflective surface: the ray from the surface to
/// the endpoint must stay within the vertical half-opening of its field of
/// view. Points straight above/below the surface are unreachable.
pub fn elevation_within_fov(ris_pos: &Point3, endpoint: &Point3, fov_rad: f64) -> bool {
    let d2 = ris_pos.dist2d(endpoint);
    if d2 == 0.0 {
        return false;
    }
    let elev = (endpoint.z - ris_pos.z).atan2(d2);
    elev.abs() <= fov_rad / 2.0 + 1e-12
}

/// Expectation of `cap` over the four blockage states with independent
/// nomadic / body-shadow probabilities.
pub fn state_weighted_capacity(
    p_nomadic: f64,
    p_self: f64,
    cap: impl Fn(BlockageState) -> f64,
) -> f64 {
    BlockageState::ALL.iter().map(|s| s.weight(p_nomadic, p_self) * cap(*s)).sum()
}

/// Sentinel stored as the reflected-only rate of triples that use the
/// virtual direct-path site: there is no surface to timeshare, so the rate
/// is unbounded. Serializes to `null` in JSON dumps.
pub const FAKE_RIS_CAP_SENTINEL: f64 = f64::INFINITY;

/// Weighted access capacity of one (base station, surface, test point)
/// triple, plus the reflected-only rate used by surface timeshare limits.
///
/// Per state the user gets the better of the direct and the reflected path;
/// a geometrically impossible path contributes zero. The body shadow is
/// deterministic given the scenario, so its "probability" is the indicator
/// that at least one available path crosses the shadow sector, and the loss
/// is applied only to the paths that actually cross it.
pub fn weighted_src_capacity(
    bs: &CandidateSite,
    ris: &CandidateSite,
    tp: &TestPoint,
    scenario: &Scenario,
    cfg: &RadioConfig,
) -> (f64, f64) {
    let obstacles = &scenario.obstacles;
    let has_direct = line_of_sight(&bs.position, &tp.position, obstacles);
    let shadowed = |target: &Point3| {
        in_self_blockage(tp, target, cfg.self_sector_rad)
            .expect("validated scenarios have distinct horizontal positions")
    };
    let dir_shadowed = has_direct && shadowed(&bs.position);
    let p_nomadic = (cfg.nomadic_coeff_per_m * bs.position.dist3d(&tp.position)).min(1.0);

    if ris.is_fake_ris {
        if !has_direct {
            return (0.0, 0.0);
        }
        let p_self = if dir_shadowed { 1.0 } else { 0.0 };
        let cap = state_weighted_capacity(p_nomadic, p_self, |state| {
            let gated = BlockageState {
                nomadic_blocked: state.nomadic_blocked,
                self_blocked: state.self_blocked && dir_shadowed,
            };
            direct_access_capacity(bs, tp, gated, cfg)
        });
        return (cap, FAKE_RIS_CAP_SENTINEL);
    }

    let ris_pos = ris.ris_position(scenario.ris_height_m);
    let has_reflected = line_of_sight(&bs.position, &ris_pos, obstacles)
        && line_of_sight(&ris_pos, &tp.position, obstacles)
        && elevation_within_fov(&ris_pos, &bs.position, cfg.fov_rad)
        && elevation_within_fov(&ris_pos, &tp.position, cfg.fov_rad);
    if !has_direct && !has_reflected {
        return (0.0, 0.0);
    }
    let ref_shadowed = has_reflected && shadowed(&ris_pos);
    let p_self = if dir_shadowed || ref_shadowed { 1.0 } else { 0.0 };
    let cap_src = state_weighted_capacity(p_nomadic, p_self, |state| {
        let direct = if has_direct {
            let gated = BlockageState {
                nomadic_blocked: state.nomadic_blocked,
                self_blocked: state.self_blocked && dir_shadowed,
            };
            direct_access_capacity(bs, tp, gated, cfg)
        } else {
            0.0
        };
        let reflected = if has_reflected {
            let gated = BlockageState {
                nomadic_blocked: state.nomadic_blocked,
                self_blocked: state.self_blocked && ref_shadowed,
            };
            ris_access_capacity(bs, &ris_pos, tp, gated, cfg)
        } else {
            0.0
        };
        direct.max(reflected)
    });
    let cap_ris = if has_reflected {
        ris_access_capacity(bs, &ris_pos, tp, BlockageState::CLEAR, cfg)
    } else {
        0.0
    };
    (cap_src, cap_ris)
}

/// All precomputed planner inputs. Matrices are dense and row-major over
/// site / test-point ids; the virtual direct-path site occupies its row and
/// column with zeros except where documented.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkParameters {
    /// `[c][d]`: backhaul possible from site c to site d.
    pub delta_bh: Vec<Vec<bool>>,
    /// `[c][d]`: constant backhaul rate, Mb/s (0 where inactive).
    pub cap_bh: Vec<Vec<f64>>,
    /// `[t][c][r]`: access triple available (BS at c serving t via surface
    /// at r, or directly when r is the virtual site).
    pub delta_src: Vec<Vec<Vec<bool>>>,
    /// `[t][c][r]`: blockage-weighted access rate, Mb/s.
    pub cap_src: Vec<Vec<Vec<f64>>>,
    /// `[t][c][r]`: reflected-only rate, Mb/s; +inf sentinel on active
    /// virtual-site triples (serialized as null).
    pub cap_ris: Vec<Vec<Vec<f64>>>,
    /// `[r][t]`: bearing from the surface site towards the test point.
    pub phi_a: Vec<Vec<f64>>,
    /// `[r][c]`: bearing from the surface site towards the base station.
    pub phi_b: Vec<Vec<f64>>,
    /// Throughput ceiling of the donor: best backhaul rate leaving it.
    pub m_max: f64,
    /// Field of view of a reflective surface (radians), carried along so
    /// downstream consumers never need the radio config again.
    pub fov_rad: f64,
    /// Human-readable anomalies (test points with no access, dead donor).
    pub warnings: Vec<String>,
}

impl LinkParameters {
    pub fn tp_has_access(&self, t: usize) -> bool {
        self.delta_src[t].iter().any(|row| row.iter().any(|&b| b))
    }

    /// Debug dump; matrices row-major as documented on the fields.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("link parameters always serialize")
    }
}

/// Precomputes every planner input from the geometry and the radio model.
pub fn build_link_parameters(
    scenario: &Scenario,
    cfg: &RadioConfig,
) -> Result<LinkParameters, ChannelError> {
    cfg.validate()?;
    let n = scenario.sites.len();
    let nt = scenario.test_points.len();
    let fake = scenario.fake_ris_index();
    let donor = scenario.donor_index();
    let f = cfg.carrier_frequency_hz;

    let mut delta_bh = vec![vec![false; n]; n];
    let mut cap_bh = vec![vec![0.0; n]; n];
    for c in 0..n {
        for d in 0..n {
            if c == d || c == fake || d == fake {
                continue;
            }
            let pc = &scenario.sites[c].position;
            let pd = &scenario.sites[d].position;
            let dist = pc.dist3d(pd);
            if dist <= cfg.max_link_range_m && line_of_sight(pc, pd, &scenario.obstacles) {
                delta_bh[c][d] = true;
                let budget =
                    cfg.eirp_dbm(&scenario.sites[c]) + cfg.ue_gain_dbi - pl_db(dist, f);
                cap_bh[c][d] = capacity_from_budget_dbm(budget, cfg);
            }
        }
    }

    let mut delta_src = vec![vec![vec![false; n]; n]; nt];
    let mut cap_src = vec![vec![vec![0.0; n]; n]; nt];
    let mut cap_ris = vec![vec![vec![0.0; n]; n]; nt];
    let floor = cfg.src_capacity_floor_mbps;
    for (t, tp) in scenario.test_points.iter().enumerate() {
        for c in 0..n {
            if c == fake {
                continue; // the virtual site can never act as a base station
            }
            let bs = &scenario.sites[c];
            for r in 0..n {
                if r == c {
                    continue; // a site cannot reflect its own transmission
                }
                let ris = &scenario.sites[r];
                if ris.is_fake_ris {
                    if !line_of_sight(&bs.position, &tp.position, &scenario.obstacles) {
                        continue;
                    }
                    let (src, sentinel) = weighted_src_capacity(bs, ris, tp, scenario, cfg);
                    if src >= floor {
                        delta_src[t][c][r] = true;
                        cap_src[t][c][r] = src;
                        cap_ris[t][c][r] = sentinel;
                    }
                } else {
                    let ris_pos = ris.ris_position(scenario.ris_height_m);
                    let legs_ok = line_of_sight(&bs.position, &ris_pos, &scenario.obstacles)
                        && line_of_sight(&ris_pos, &tp.position, &scenario.obstacles)
                        && elevation_within_fov(&ris_pos, &bs.position, cfg.fov_rad)
                        && elevation_within_fov(&ris_pos, &tp.position, cfg.fov_rad);
                    if !legs_ok {
                        continue;
                    }
                    let (src, reflected) = weighted_src_capacity(bs, ris, tp, scenario, cfg);
                    if src >= floor && reflected >= floor {
                        delta_src[t][c][r] = true;
                        cap_src[t][c][r] = src;
                        cap_ris[t][c][r] = reflected;
                    }
                }
            }
        }
    }

    let mut phi_a = vec![vec![0.0; nt]; n];
    let mut phi_b = vec![vec![0.0; n]; n];
    for r in 0..n {
        if r == fake {
            continue;
        }
        let rp = &scenario.sites[r].position;
        for (t, tp) in scenario.test_points.iter().enumerate() {
            phi_a[r][t] = azimuth(rp, &tp.position)
                .expect("validated scenarios have distinct horizontal positions");
        }
        for c in 0..n {
            if c == r || c == fake {
                continue;
            }
            phi_b[r][c] = azimuth(rp, &scenario.sites[c].position)
                .expect("validated scenarios have distinct horizontal positions");
        }
    }

    let m_max = cap_bh[donor].iter().cloned().fold(0.0, f64::max);

    let mut warnings = Vec::new();
    if m_max == 0.0 {
        warnings.push("donor has no usable backhaul link; the network cannot carry traffic".into());
    }
    for t in 0..nt {
        let has = delta_src[t].iter().any(|row| row.iter().any(|&b| b));
        if !has {
            warnings.push(format!("test point {t} has no feasible access link"));
        }
    }

    Ok(LinkParameters {
        delta_bh,
        cap_bh,
        delta_src,
        cap_src,
        cap_ris,
        phi_a,
        phi_b,
        m_max,
        fov_rad: cfg.fov_rad,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_instance, GenerationConfig, Obstacle};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn path_loss_reference_values() {
        // Unit argument of the log: d=1, f=c/(4*pi).
        let f0 = SPEED_OF_LIGHT_M_S / (4.0 * PI);
        assert!(path_loss_db(1.0, f0).unwrap().abs() < 1e-12);
        // Closed-form evaluation at 100 m, 28 GHz.
        let v = path_loss_db(100.0, 28.0e9).unwrap();
        assert!(close(v, 101.390_943_848_727_76, 1e-9), "{v}");
        assert!(close(v, 101.39, 0.01));
        // Doubling the distance adds exactly 20*log10(2).
        let d2 = path_loss_db(200.0, 28.0e9).unwrap();
        assert!(close(d2 - v, 20.0 * 2.0f64.log10(), 1e-12));
        // Strictly increasing in d.
        assert!(path_loss_db(101.0, 28.0e9).unwrap() > v);
        assert!(path_loss_db(0.0, 28.0e9).is_err());
        assert!(path_loss_db(-3.0, 28.0e9).is_err());
    }

    #[test]
    fn shannon_reference_values() {
        assert_eq!(shannon_capacity_mbps(1.0, 200.0e6).unwrap(), 200.0);
        assert_eq!(shannon_capacity_mbps(0.0, 200.0e6).unwrap(), 0.0);
        assert_eq!(shannon_capacity_mbps(3.0, 200.0e6).unwrap(), 400.0);
        assert!(shannon_capacity_mbps(-0.1, 200.0e6).is_err());
        // Monotone nondecreasing in snr.
        let lo = shannon_capacity_mbps(0.5, 200.0e6).unwrap();
        let hi = shannon_capacity_mbps(0.6, 200.0e6).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn noise_floor_value() {
        let cfg = RadioConfig::default();
        // -174 + 10*log10(2e8) + 7
        assert!(close(cfg.noise_dbm(), -83.989_700_043_360_19, 1e-9));
    }

    #[test]
    fn aperture_term_scaling() {
        let cfg = RadioConfig::default();
        assert!(close(cfg.aperture_gain_db(), 59.202_309_582_986_416, 1e-9));
        // Received power scales with the square of the total element count
        // inside a 20*log10, i.e. quadrupling the total adds 20*log10(16).
        let bigger = RadioConfig { ris_elements: 200, ..RadioConfig::default() };
        let delta = bigger.aperture_gain_db() - cfg.aperture_gain_db();
        assert!(close(delta, 20.0 * 16.0f64.log10(), 1e-9), "{delta}");
    }

    fn site(id: usize, x: f64, y: f64, z: f64) -> CandidateSite {
        CandidateSite { id, position: Point3::new(x, y, z), is_donor_site: false, is_fake_ris: false }
    }

    fn tp_at(x: f64, y: f64, body: f64) -> TestPoint {
        TestPoint { id: 0, position: Point3::new(x, y, 1.5), body_orientation: body }
    }

    #[test]
    fn direct_budget_state_oracle() {
        // Frozen against an independent spreadsheet-style evaluation:
        // node BS (0,0,6) -> TP (60,25,1.5), 51 dBm EIRP, 6 dBi, NF 7.
        let cfg = RadioConfig::default();
        let bs = site(0, 0.0, 0.0, 6.0);
        let tp = tp_at(60.0, 25.0, 0.0);
        let expect = [
            (BlockageState { nomadic_blocked: false, self_blocked: false }, 2878.113564876),
            (BlockageState { nomadic_blocked: true, self_blocked: false }, 1550.669257377),
            (BlockageState { nomadic_blocked: false, self_blocked: true }, 898.074712257),
            (BlockageState { nomadic_blocked: true, self_blocked: true }, 56.136488062),
        ];
        for (state, want) in expect {
            let got = direct_access_capacity(&bs, &tp, state, &cfg);
            assert!(close(got, want, 1e-6), "state {state:?}: got {got}, want {want}");
        }
        // dB additivity: both-blocked equals clear with EIRP lowered by the
        // sum of the losses.
        let lowered = RadioConfig {
            node_eirp_dbm: cfg.node_eirp_dbm - cfg.nomadic_loss_db - cfg.self_loss_db,
            ..cfg.clone()
        };
        let both = BlockageState { nomadic_blocked: true, self_blocked: true };
        let a = direct_access_capacity(&bs, &tp, both, &cfg);
        let b = direct_access_capacity(&bs, &tp, BlockageState::CLEAR, &lowered);
        assert!(close(a, b, 1e-9));
    }

    #[test]
    fn cascade_budget_state_oracle() {
        // Same spreadsheet oracle: BS (0,0,6), surface site (40,-20) mounted
        // at 3 m, TP (60,25,1.5).
        let cfg = RadioConfig::default();
        let bs = site(0, 0.0, 0.0, 6.0);
        let ris_pos = Point3::new(40.0, -20.0, 3.0);
        let tp = tp_at(60.0, 25.0, 0.0);
        let expect = [
            (BlockageState { nomadic_blocked: false, self_blocked: false }, 724.019198791),
            (BlockageState { nomadic_blocked: true, self_blocked: false }, 30.879880780),
            (BlockageState { nomadic_blocked: false, self_blocked: true }, 3.241013887),
            (BlockageState { nomadic_blocked: true, self_blocked: true }, 0.032591005),
        ];
        for (state, want) in expect {
            let got = ris_access_capacity(&bs, &ris_pos, &tp, state, &cfg);
            assert!(close(got, want, 1e-6), "state {state:?}: got {got}, want {want}");
        }
        // The nomadic loss hits the user leg only: the nomadic-state budget
        // sits exactly one loss below clear (not two).
        let nom = BlockageState { nomadic_blocked: true, self_blocked: false };
        let drop = ris_cascade_budget_dbm(&bs, &ris_pos, &tp, BlockageState::CLEAR, &cfg)
            - ris_cascade_budget_dbm(&bs, &ris_pos, &tp, nom, &cfg);
        assert!(close(drop, cfg.nomadic_loss_db, 1e-12));
    }

    #[test]
    fn cascade_product_distance_law() {
        // Doubling d1*d2 lowers the budget by exactly 20*log10(2).
        let cfg = RadioConfig::default();
        let bs = site(0, -10.0, 0.0, 3.0);
        let ris_near = Point3::new(0.0, 0.0, 3.0);
        // All points level with the surface so leg lengths are exact:
        // d1 = 10 m fixed, d2 goes from 5 m to 10 m (d1*d2 doubles).
        let tp_near =
            TestPoint { id: 0, position: Point3::new(5.0, 0.0, 3.0), body_orientation: 0.0 };
        let tp_far =
            TestPoint { id: 0, position: Point3::new(10.0, 0.0, 3.0), body_orientation: 0.0 };
        let b_near = ris_cascade_budget_dbm(&bs, &ris_near, &tp_near, BlockageState::CLEAR, &cfg);
        let b_far = ris_cascade_budget_dbm(&bs, &ris_near, &tp_far, BlockageState::CLEAR, &cfg);
        assert!(close(b_near - b_far, 20.0 * 2.0f64.log10(), 1e-12));
        assert!(close(b_near - b_far, 6.02, 0.001));
    }

    #[test]
    fn four_state_weights_and_toy_average() {
        let caps = [100.0, 70.0, 40.0, 10.0]; // clear, nomadic, self, both
        let val = state_weighted_capacity(0.3, 0.5, |s| {
            match (s.nomadic_blocked, s.self_blocked) {
                (false, false) => caps[0],
                (true, false) => caps[1],
                (false, true) => caps[2],
                (true, true) => caps[3],
            }
        });
        // Weights {0.35, 0.15, 0.35, 0.15}.
        assert!(close(val, 61.0, 1e-12), "{val}");
        let total: f64 = BlockageState::ALL.iter().map(|s| s.weight(0.3, 0.5)).sum();
        assert!(close(total, 1.0, 1e-12));
    }

    /// Hand-built world: donor high on the left, one rooftop site, the
    /// virtual site, one user. No obstacles.
    fn tiny_scenario(body_orientation: f64) -> Scenario {
        let s = Scenario {
            seed: 0,
            cell_center: Point3::new(0.0, 0.0, 0.0),
            cell_radius_m: 120.0,
            ris_height_m: 3.0,
            obstacles: vec![],
            sites: vec![
                CandidateSite {
                    id: 0,
                    position: Point3::new(-100.0, 0.0, 25.0),
                    is_donor_site: true,
                    is_fake_ris: false,
                },
                site(1, 30.0, 10.0, 6.0),
                CandidateSite {
                    id: 2,
                    position: Point3::new(0.0, 0.0, 0.0),
                    is_donor_site: false,
                    is_fake_ris: true,
                },
            ],
            test_points: vec![TestPoint {
                id: 0,
                position: Point3::new(50.0, -20.0, 1.5),
                body_orientation,
            }],
        };
        s.validate().unwrap();
        s
    }

    #[test]
    fn weighted_capacity_matches_brute_force_enumeration() {
        let cfg = RadioConfig::default();
        let sc = tiny_scenario(1.0);
        let bs = &sc.sites[0];
        let ris = &sc.sites[1];
        let tp = &sc.test_points[0];
        let (cap_src, cap_ris) = weighted_src_capacity(bs, ris, tp, &sc, &cfg);

        // Independent enumeration of the four states.
        let ris_pos = ris.ris_position(sc.ris_height_m);
        let p_nom = (cfg.nomadic_coeff_per_m * bs.position.dist3d(&tp.position)).min(1.0);
        let dir_shadowed = in_self_blockage(tp, &bs.position, cfg.self_sector_rad).unwrap();
        let ref_shadowed = in_self_blockage(tp, &ris_pos, cfg.self_sector_rad).unwrap();
        let p_self = if dir_shadowed || ref_shadowed { 1.0 } else { 0.0 };
        let mut want = 0.0;
        for state in BlockageState::ALL {
            let w = state.weight(p_nom, p_self);
            let d = direct_access_capacity(
                bs,
                tp,
                BlockageState {
                    nomadic_blocked: state.nomadic_blocked,
                    self_blocked: state.self_blocked && dir_shadowed,
                },
                &cfg,
            );
            let r = ris_access_capacity(
                bs,
                &ris_pos,
                tp,
                BlockageState {
                    nomadic_blocked: state.nomadic_blocked,
                    self_blocked: state.self_blocked && ref_shadowed,
                },
                &cfg,
            );
            want += w * d.max(r);
        }
        assert!(close(cap_src, want, 1e-9), "{cap_src} vs {want}");
        let clear_ref = ris_access_capacity(bs, &ris_pos, tp, BlockageState::CLEAR, &cfg);
        assert!(close(cap_ris, clear_ref, 1e-12));
    }

    #[test]
    fn degenerate_probabilities_reduce_to_best_link() {
        // No nomadic blockage and a body pointed so neither path is
        // shadowed: the weighted value is the clear-state best link.
        let cfg = RadioConfig { nomadic_coeff_per_m: 0.0, ..RadioConfig::default() };
        let sc = tiny_scenario(0.0); // facing +x; both BS/RIS sit towards +x of nothing... body at 0
        let bs = &sc.sites[0];
        let ris = &sc.sites[1];
        let tp = &sc.test_points[0];
        let ris_pos = ris.ris_position(sc.ris_height_m);
        let dir_shadowed = in_self_blockage(tp, &bs.position, cfg.self_sector_rad).unwrap();
        let ref_shadowed = in_self_blockage(tp, &ris_pos, cfg.self_sector_rad).unwrap();
        // Pick an orientation where neither is shadowed for this geometry.
        let sc2 = tiny_scenario(if dir_shadowed || ref_shadowed { PI } else { 0.0 });
        let tp2 = &sc2.test_points[0];
        let d2 = in_self_blockage(tp2, &bs.position, cfg.self_sector_rad).unwrap();
        let r2 = in_self_blockage(tp2, &ris_pos, cfg.self_sector_rad).unwrap();
        assert!(!d2 && !r2, "geometry unexpectedly shadowed both ways");
        let (cap_src, _) = weighted_src_capacity(&sc2.sites[0], &sc2.sites[1], tp2, &sc2, &cfg);
        let best = direct_access_capacity(&sc2.sites[0], tp2, BlockageState::CLEAR, &cfg).max(
            ris_access_capacity(&sc2.sites[0], &ris_pos, tp2, BlockageState::CLEAR, &cfg),
        );
        assert!(close(cap_src, best, 1e-9));
    }

    #[test]
    fn fake_ris_triple_uses_direct_only() {
        let cfg = RadioConfig::default();
        let sc = tiny_scenario(2.5);
        let bs = &sc.sites[1];
        let fake = &sc.sites[2];
        let tp = &sc.test_points[0];
        let (cap_src, cap_ris) = weighted_src_capacity(bs, fake, tp, &sc, &cfg);
        assert!(cap_ris.is_infinite());
        let p_nom = (cfg.nomadic_coeff_per_m * bs.position.dist3d(&tp.position)).min(1.0);
        let dir_shadowed = in_self_blockage(tp, &bs.position, cfg.self_sector_rad).unwrap();
        let p_self = if dir_shadowed { 1.0 } else { 0.0 };
        let want = state_weighted_capacity(p_nom, p_self, |s| {
            direct_access_capacity(
                bs,
                tp,
                BlockageState {
                    nomadic_blocked: s.nomadic_blocked,
                    self_blocked: s.self_blocked && dir_shadowed,
                },
                &cfg,
            )
        });
        assert!(close(cap_src, want, 1e-9));
    }

    #[test]
    fn elevation_fov_check() {
        let ris = Point3::new(0.0, 0.0, 3.0);
        let fov = 2.0 * PI / 3.0; // +-60 degrees
        assert!(elevation_within_fov(&ris, &Point3::new(10.0, 0.0, 3.0), fov));
        assert!(elevation_within_fov(&ris, &Point3::new(10.0, 0.0, 13.0), fov)); // 45 deg
        assert!(!elevation_within_fov(&ris, &Point3::new(1.0, 0.0, 13.0), fov)); // ~84 deg
        assert!(!elevation_within_fov(&ris, &Point3::new(0.0, 0.0, 13.0), fov)); // straight up
    }

    #[test]
    fn link_parameters_invariants() {
        let gen = GenerationConfig { seed: 11, ..GenerationConfig::default() };
        let sc = generate_instance(&gen).unwrap();
        let cfg = RadioConfig::default();
        let lp = build_link_parameters(&sc, &cfg).unwrap();
        let n = sc.sites.len();
        let nt = sc.test_points.len();
        let fake = sc.fake_ris_index();
        let donor = sc.donor_index();

        let mut scan_max: f64 = 0.0;
        for c in 0..n {
            assert!(!lp.delta_bh[c][c]);
            for d in 0..n {
                // Activation symmetric in value (LoS and range are symmetric).
                assert_eq!(lp.delta_bh[c][d], lp.delta_bh[d][c]);
                if c == fake || d == fake {
                    assert!(!lp.delta_bh[c][d]);
                }
                if lp.delta_bh[c][d] {
                    assert!(lp.cap_bh[c][d] > 0.0);
                } else {
                    assert_eq!(lp.cap_bh[c][d], 0.0);
                }
            }
        }
        for &v in &lp.cap_bh[donor] {
            scan_max = scan_max.max(v);
        }
        assert_eq!(lp.m_max, scan_max);

        for t in 0..nt {
            for c in 0..n {
                for r in 0..n {
                    let active = lp.delta_src[t][c][r];
                    if c == fake || c == r {
                        assert!(!active);
                    }
                    if active {
                        assert!(lp.cap_src[t][c][r] >= cfg.src_capacity_floor_mbps);
                        assert!(lp.cap_ris[t][c][r] > 0.0);
                        if r == fake {
                            assert!(lp.cap_ris[t][c][r].is_infinite());
                        }
                        // Weighted value never exceeds the clear-state best.
                        let bs = &sc.sites[c];
                        let tp = &sc.test_points[t];
                        let clear_direct =
                            direct_access_capacity(bs, tp, BlockageState::CLEAR, &cfg);
                        let clear_best = if r == fake {
                            clear_direct
                        } else {
                            let rp = sc.sites[r].ris_position(sc.ris_height_m);
                            clear_direct
                                .max(ris_access_capacity(bs, &rp, tp, BlockageState::CLEAR, &cfg))
                        };
                        assert!(lp.cap_src[t][c][r] <= clear_best + 1e-9);
                    } else {
                        assert_eq!(lp.cap_src[t][c][r], 0.0);
                        assert_eq!(lp.cap_ris[t][c][r], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn raising_eirp_never_hurts() {
        let gen = GenerationConfig { seed: 11, ..GenerationConfig::default() };
        let sc = generate_instance(&gen).unwrap();
        let base_cfg = RadioConfig::default();
        let hot_cfg = RadioConfig {
            donor_eirp_dbm: base_cfg.donor_eirp_dbm + 3.0,
            node_eirp_dbm: base_cfg.node_eirp_dbm + 3.0,
            ..base_cfg.clone()
        };
        let base = build_link_parameters(&sc, &base_cfg).unwrap();
        let hot = build_link_parameters(&sc, &hot_cfg).unwrap();
        let n = sc.sites.len();
        for c in 0..n {
            for d in 0..n {
                assert_eq!(base.delta_bh[c][d], hot.delta_bh[c][d]); // range/LoS unchanged
                assert!(hot.cap_bh[c][d] >= base.cap_bh[c][d]);
            }
        }
        for t in 0..sc.test_points.len() {
            for c in 0..n {
                for r in 0..n {
                    if base.delta_src[t][c][r] {
                        assert!(hot.delta_src[t][c][r], "activation lost at ({t},{c},{r})");
                        assert!(hot.cap_src[t][c][r] >= base.cap_src[t][c][r] - 1e-12);
                    }
                }
            }
        }
        assert!(hot.m_max >= base.m_max);
    }

    #[test]
    fn more_nomadic_blockage_never_helps() {
        let gen = GenerationConfig { seed: 4, ..GenerationConfig::default() };
        let sc = generate_instance(&gen).unwrap();
        let base_cfg = RadioConfig::default();
        let crowded = RadioConfig { nomadic_coeff_per_m: 0.01, ..base_cfg.clone() };
        let base = build_link_parameters(&sc, &base_cfg).unwrap();
        let worse = build_link_parameters(&sc, &crowded).unwrap();
        for t in 0..sc.test_points.len() {
            for c in 0..sc.sites.len() {
                for r in 0..sc.sites.len() {
                    if worse.delta_src[t][c][r] {
                        // Anything still active must be active in the calmer
                        // world too, with at least the same capacity.
                        assert!(base.delta_src[t][c][r]);
                    }
                    if base.delta_src[t][c][r] && worse.delta_src[t][c][r] {
                        assert!(
                            worse.cap_src[t][c][r] <= base.cap_src[t][c][r] + 1e-12,
                            "capacity rose with more blockage at ({t},{c},{r})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn backhaul_face_to_face_and_blocked() {
        let mut sc = tiny_scenario(0.0);
        let cfg = RadioConfig::default();
        let lp = build_link_parameters(&sc, &cfg).unwrap();
        assert!(lp.delta_bh[0][1] && lp.delta_bh[1][0]);
        // Donor transmits hotter than the node, so its rate is higher.
        assert!(lp.cap_bh[0][1] > lp.cap_bh[1][0]);
        // A slab between them kills both directions.
        sc.obstacles.push(Obstacle {
            min_x: -40.0,
            min_y: -30.0,
            max_x: -30.0,
            max_y: 30.0,
            height: 40.0,
        });
        let lp2 = build_link_parameters(&sc, &cfg).unwrap();
        assert!(!lp2.delta_bh[0][1] && !lp2.delta_bh[1][0]);
        assert_eq!(lp2.cap_bh[0][1], 0.0);
        // Out-of-range pairs never activate even in LoS.
        let short_range = RadioConfig { max_link_range_m: 50.0, ..cfg };
        let sc3 = tiny_scenario(0.0);
        let lp3 = build_link_parameters(&sc3, &short_range).unwrap();
        assert!(!lp3.delta_bh[0][1]); // 134 m apart
    }

    #[test]
    fn warnings_flag_unserved_test_points() {
        let sc = tiny_scenario(0.0);
        // A floor no link can reach deactivates every triple.
        let cfg = RadioConfig { src_capacity_floor_mbps: 1.0e9, ..RadioConfig::default() };
        let lp = build_link_parameters(&sc, &cfg).unwrap();
        assert!(!lp.tp_has_access(0));
        assert!(lp.warnings.iter().any(|w| w.contains("test point 0")));
    }

    #[test]
    fn json_dump_has_matrices_and_sentinel() {
        let sc = tiny_scenario(0.0);
        let cfg = RadioConfig::default();
        let lp = build_link_parameters(&sc, &cfg).unwrap();
        let text = lp.to_json();
        assert!(text.contains("\"delta_bh\""));
        assert!(text.contains("\"phi_a\""));
        // The virtual-site sentinel serializes as null.
        if lp.delta_src[0].iter().enumerate().any(|(c, row)| row[2] && c != 2) {
            assert!(text.contains("null"));
        }
    }

    #[test]
    fn bearings_filled_for_real_surfaces() {
        let sc = tiny_scenario(0.0);
        let cfg = RadioConfig::default();
        let lp = build_link_parameters(&sc, &cfg).unwrap();
        let want_a = azimuth(&sc.sites[1].position, &sc.test_points[0].position).unwrap();
        assert!(close(lp.phi_a[1][0], want_a, 1e-12));
        let want_b = azimuth(&sc.sites[1].position, &sc.sites[0].position).unwrap();
        assert!(close(lp.phi_b[1][0], want_b, 1e-12));
    }
}
