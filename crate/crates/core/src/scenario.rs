//! Urban deployment scenarios: a hexagonal cell populated with candidate
//! sites, test points and box obstacles.
//!
//! The generator is fully deterministic for a given configuration (including
//! the seed), which the experiment harness relies on for reproducible runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Attempts per entity before the rejection sampler gives up.
const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Minimum horizontal separation (metres) enforced between distinct placed
/// nodes so that bearings between any pair are well defined.
const MIN_NODE_SEPARATION_M: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to place {what} after {attempts} attempts; the cell is too crowded")]
    PlacementFailed { what: String, attempts: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid scenario ({field}): {msg}")]
    Invalid { field: String, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist3d(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn dist2d(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Axis-aligned box obstacle sitting on the ground plane (z from 0 to
/// `height`). Treated as closed: touching the surface counts as blocked.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
    pub height: f64,
}

impl Obstacle {
    /// True when the horizontal point lies inside or on the footprint.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// A rooftop location where an IAB node or a reflective surface may be
/// installed. Exactly one site per scenario is the donor site and exactly
/// one is the virtual site that models the "no surface involved" direct
/// association option.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSite {
    pub id: usize,
    pub position: Point3,
    pub is_donor_site: bool,
    pub is_fake_ris: bool,
}

impl CandidateSite {
    /// Mounting point of a reflective surface installed at this site: same
    /// rooftop, surface-specific height.
    pub fn ris_position(&self, ris_height_m: f64) -> Point3 {
        Point3::new(self.position.x, self.position.y, ris_height_m)
    }
}

/// A ground location whose demand must be served, together with the
/// orientation of the user's body (radians, world frame).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPoint {
    pub id: usize,
    pub position: Point3,
    pub body_orientation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub cell_center: Point3,
    pub cell_radius_m: f64,
    /// Mounting height for reflective surfaces (they hang below rooftop
    /// antennas, so it is a property of the deployment, not of the radio).
    pub ris_height_m: f64,
    pub obstacles: Vec<Obstacle>,
    pub sites: Vec<CandidateSite>,
    pub test_points: Vec<TestPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    /// Number of real candidate sites, donor site included. The virtual
    /// direct-path site is appended on top of this count.
    pub n_sites: usize,
    pub n_test_points: usize,
    pub cell_radius_m: f64,
    pub donor_height_m: f64,
    pub site_height_m: f64,
    pub ris_height_m: f64,
    pub ue_height_m: f64,
    /// Obstacles per square metre of cell area.
    pub obstacle_density: f64,
    pub obstacle_side_min_m: f64,
    pub obstacle_side_max_m: f64,
    pub obstacle_height_min_m: f64,
    pub obstacle_height_max_m: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_sites: 8,
            n_test_points: 5,
            cell_radius_m: 120.0,
            donor_height_m: 25.0,
            site_height_m: 6.0,
            ris_height_m: 3.0,
            ue_height_m: 1.5,
            obstacle_density: 2.0e-4,
            obstacle_side_min_m: 8.0,
            obstacle_side_max_m: 18.0,
            obstacle_height_min_m: 4.0,
            obstacle_height_max_m: 10.0,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_sites < 1 {
            return Err(ScenarioError::InvalidConfig(
                "need at least one candidate site (the donor site)".into(),
            ));
        }
        if self.n_test_points < 1 {
            return Err(ScenarioError::InvalidConfig("need at least one test point".into()));
        }
        if self.cell_radius_m <= 0.0 {
            return Err(ScenarioError::InvalidConfig("cell radius must be positive".into()));
        }
        if self.obstacle_density < 0.0 {
            return Err(ScenarioError::InvalidConfig("obstacle density must be >= 0".into()));
        }
        if self.obstacle_side_min_m > self.obstacle_side_max_m
            || self.obstacle_height_min_m > self.obstacle_height_max_m
        {
            return Err(ScenarioError::InvalidConfig(
                "obstacle size ranges must satisfy min <= max".into(),
            ));
        }
        if self.obstacle_side_min_m <= 0.0 || self.obstacle_height_min_m <= 0.0 {
            return Err(ScenarioError::InvalidConfig("obstacle dimensions must be positive".into()));
        }
        for (name, h) in [
            ("donor_height_m", self.donor_height_m),
            ("site_height_m", self.site_height_m),
            ("ris_height_m", self.ris_height_m),
            ("ue_height_m", self.ue_height_m),
        ] {
            if h <= 0.0 {
                return Err(ScenarioError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// The six corners of the hexagon: vertex k at angle k*60 degrees from the
/// centre, so two vertices sit on the x axis at +-radius.
pub fn hex_vertices(center: &Point3, radius: f64) -> [(f64, f64); 6] {
    let mut v = [(0.0, 0.0); 6];
    for (k, slot) in v.iter_mut().enumerate() {
        let ang = k as f64 * PI / 3.0;
        *slot = (center.x + radius * ang.cos(), center.y + radius * ang.sin());
    }
    v
}

/// Point-in-hexagon test (boundary counts as inside).
pub fn point_in_hex(center: &Point3, radius: f64, x: f64, y: f64) -> bool {
    let dx = (x - center.x).abs();
    let dy = (y - center.y).abs();
    let r32 = radius * 3.0f64.sqrt() / 2.0;
    if dy > r32 + 1e-12 {
        return false;
    }
    // Edge between vertex 0 (r, 0) and vertex 1 (r/2, r*sqrt(3)/2):
    // sqrt(3)*x + y <= sqrt(3)*r, extended to all quadrants via |dx|, |dy|.
    3.0f64.sqrt() * dx + dy <= 3.0f64.sqrt() * radius + 1e-12
}

/// Bearing of the horizontal ray from `from` towards `to`, in [0, 2*pi).
/// Fails when the two points share the same horizontal position.
pub fn azimuth(from: &Point3, to: &Point3) -> Result<f64, ScenarioError> {
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(ScenarioError::DegenerateGeometry(format!(
            "azimuth undefined between vertically aligned points ({}, {})",
            from.x, from.y
        )));
    }
    Ok(wrap_angle(dy.atan2(dx)))
}

/// Wraps any angle into [0, 2*pi).
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    // The addition above can round back up to exactly 2*pi.
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

/// Absolute circular distance between two angles, in [0, pi].
pub fn angle_dist(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

/// True when the user's own body shadows the horizontal direction from the
/// test point towards `target`. The blocked sector is centred on the
/// direction opposite the body orientation and spans `sector_width` radians;
/// the sector is closed, so boundary directions count as blocked.
pub fn in_self_blockage(
    tp: &TestPoint,
    target: &Point3,
    sector_width: f64,
) -> Result<bool, ScenarioError> {
    let bearing = azimuth(&tp.position, target)?;
    let blocked_center = wrap_angle(tp.body_orientation + PI);
    Ok(angle_dist(bearing, blocked_center) <= sector_width / 2.0 + 1e-12)
}

/// Line-of-sight between two points: true when the open segment between them
/// misses every (closed) obstacle box. Grazing a face counts as blocked.
pub fn line_of_sight(a: &Point3, b: &Point3, obstacles: &[Obstacle]) -> bool {
    obstacles.iter().all(|o| !segment_hits_box(a, b, o))
}

/// Slab test between the open segment (a, b) and the closed box
/// [min_x,max_x] x [min_y,max_y] x [0,height].
fn segment_hits_box(a: &Point3, b: &Point3, o: &Obstacle) -> bool {
    let dir = [b.x - a.x, b.y - a.y, b.z - a.z];
    let start = [a.x, a.y, a.z];
    let lo = [o.min_x, o.min_y, 0.0];
    let hi = [o.max_x, o.max_y, o.height];
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for ax in 0..3 {
        if dir[ax].abs() < 1e-15 {
            if start[ax] < lo[ax] || start[ax] > hi[ax] {
                return false;
            }
        } else {
            let inv = 1.0 / dir[ax];
            let mut t0 = (lo[ax] - start[ax]) * inv;
            let mut t1 = (hi[ax] - start[ax]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            tmin = tmin.max(t0);
            tmax = tmax.min(t1);
            if tmin > tmax {
                return false;
            }
        }
    }
    // The intersection interval must overlap the open (0, 1) parameter range.
    tmax > 0.0 && tmin < 1.0
}

// ---------------------------------------------------------------------------
// Serialized form. Kept separate from the in-memory types so the file schema
// stays stable: {seed, ris_height_m, cell{center, radius},
// obstacles[{min_x,min_y,max_x,max_y,height}], sites[{id,x,y,z,donor,
// fake_ris}], test_points[{id,x,y,z,body_orientation}]}.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    #[serde(default = "default_ris_height")]
    ris_height_m: f64,
    cell: CellFile,
    obstacles: Vec<Obstacle>,
    sites: Vec<SiteFile>,
    test_points: Vec<TestPointFile>,
}

fn default_ris_height() -> f64 {
    3.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFile {
    center: Point3,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteFile {
    id: usize,
    x: f64,
    y: f64,
    z: f64,
    #[serde(default)]
    donor: bool,
    #[serde(default)]
    fake_ris: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestPointFile {
    id: usize,
    x: f64,
    y: f64,
    z: f64,
    body_orientation: f64,
}

impl Scenario {
    /// Index of the donor site.
    pub fn donor_index(&self) -> usize {
        self.sites.iter().position(|s| s.is_donor_site).expect("validated scenario has a donor")
    }

    /// Index of the virtual direct-path site.
    pub fn fake_ris_index(&self) -> usize {
        self.sites.iter().position(|s| s.is_fake_ris).expect("validated scenario has a fake site")
    }

    /// Real (installable) site indices, i.e. everything except the virtual
    /// direct-path site.
    pub fn real_site_indices(&self) -> Vec<usize> {
        (0..self.sites.len()).filter(|&i| !self.sites[i].is_fake_ris).collect()
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        let file = ScenarioFile {
            seed: self.seed,
            ris_height_m: self.ris_height_m,
            cell: CellFile { center: self.cell_center, radius: self.cell_radius_m },
            obstacles: self.obstacles.clone(),
            sites: self
                .sites
                .iter()
                .map(|s| SiteFile {
                    id: s.id,
                    x: s.position.x,
                    y: s.position.y,
                    z: s.position.z,
                    donor: s.is_donor_site,
                    fake_ris: s.is_fake_ris,
                })
                .collect(),
            test_points: self
                .test_points
                .iter()
                .map(|t| TestPointFile {
                    id: t.id,
                    x: t.position.x,
                    y: t.position.y,
                    z: t.position.z,
                    body_orientation: t.body_orientation,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let scenario = Scenario {
            seed: file.seed,
            cell_center: file.cell.center,
            cell_radius_m: file.cell.radius,
            ris_height_m: file.ris_height_m,
            obstacles: file.obstacles,
            sites: file
                .sites
                .into_iter()
                .map(|s| CandidateSite {
                    id: s.id,
                    position: Point3::new(s.x, s.y, s.z),
                    is_donor_site: s.donor,
                    is_fake_ris: s.fake_ris,
                })
                .collect(),
            test_points: file
                .test_points
                .into_iter()
                .map(|t| TestPoint {
                    id: t.id,
                    position: Point3::new(t.x, t.y, t.z),
                    body_orientation: t.body_orientation,
                })
                .collect(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Structural sanity checks shared by the generator and the JSON loader.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.cell_radius_m > 0.0 && self.cell_radius_m.is_finite()) {
            return Err(invalid("cell.radius", "must be positive and finite"));
        }
        if !(self.ris_height_m > 0.0 && self.ris_height_m.is_finite()) {
            return Err(invalid("ris_height_m", "must be positive and finite"));
        }
        if !self.cell_center.is_finite() {
            return Err(invalid("cell.center", "coordinates must be finite"));
        }
        if self.sites.len() < 2 {
            return Err(invalid(
                "sites",
                "need at least a donor site and the virtual direct-path site",
            ));
        }
        if self.test_points.is_empty() {
            return Err(invalid("test_points", "need at least one test point"));
        }
        let donors = self.sites.iter().filter(|s| s.is_donor_site).count();
        if donors != 1 {
            return Err(invalid("sites.donor", format!("expected exactly 1 donor site, got {donors}")));
        }
        let fakes = self.sites.iter().filter(|s| s.is_fake_ris).count();
        if fakes != 1 {
            return Err(invalid(
                "sites.fake_ris",
                format!("expected exactly 1 virtual direct-path site, got {fakes}"),
            ));
        }
        if self.sites.iter().any(|s| s.is_donor_site && s.is_fake_ris) {
            return Err(invalid(
                "sites",
                "the donor site cannot double as the virtual direct-path site",
            ));
        }
        for (i, s) in self.sites.iter().enumerate() {
            let field = format!("sites[{i}]");
            if s.id != i {
                return Err(invalid(field, format!("ids must be 0..n in order; found id {}", s.id)));
            }
            if !s.position.is_finite() {
                return Err(invalid(field, "coordinates must be finite"));
            }
        }
        for (i, t) in self.test_points.iter().enumerate() {
            let field = format!("test_points[{i}]");
            if t.id != i {
                return Err(invalid(field, format!("ids must be 0..n in order; found id {}", t.id)));
            }
            if !t.position.is_finite() || !t.body_orientation.is_finite() {
                return Err(invalid(field, "coordinates and body_orientation must be finite"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.min_x < o.max_x && o.min_y < o.max_y && o.height > 0.0) {
                return Err(invalid(
                    format!("obstacles[{i}]"),
                    "extents must satisfy min < max and height > 0",
                ));
            }
            if ![o.min_x, o.min_y, o.max_x, o.max_y, o.height].iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("obstacles[{i}]"), "extents must be finite"));
            }
        }
        // Distinct horizontal positions keep all pairwise bearings defined.
        let mut nodes: Vec<(f64, f64, String)> = Vec::new();
        for s in &self.sites {
            nodes.push((s.position.x, s.position.y, format!("sites[{}]", s.id)));
        }
        for t in &self.test_points {
            nodes.push((t.position.x, t.position.y, format!("test_points[{}]", t.id)));
        }
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                if nodes[i].0 == nodes[j].0 && nodes[i].1 == nodes[j].1 {
                    return Err(invalid(
                        nodes[j].2.clone(),
                        format!("shares a horizontal position with {}", nodes[i].2),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Generates a scenario: hexagonal cell centred at the origin, donor on the
/// leftmost vertex, random box obstacles, then candidate sites and test
/// points rejection-sampled inside the cell and outside every footprint.
pub fn generate_instance(config: &GenerationConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let center = Point3::new(0.0, 0.0, 0.0);
    let r = config.cell_radius_m;
    let donor_xy = (-r, 0.0);

    let hex_area = 1.5 * 3.0f64.sqrt() * r * r;
    let n_obstacles = (config.obstacle_density * hex_area).round() as usize;
    let mut obstacles = Vec::with_capacity(n_obstacles);
    for k in 0..n_obstacles {
        let o = place_obstacle(&mut rng, config, &center, donor_xy).ok_or_else(|| {
            ScenarioError::PlacementFailed {
                what: format!("obstacle {k}"),
                attempts: MAX_PLACEMENT_ATTEMPTS,
            }
        })?;
        obstacles.push(o);
    }

    let mut taken: Vec<(f64, f64)> = vec![donor_xy];
    let mut sites = Vec::with_capacity(config.n_sites + 1);
    sites.push(CandidateSite {
        id: 0,
        position: Point3::new(donor_xy.0, donor_xy.1, config.donor_height_m),
        is_donor_site: true,
        is_fake_ris: false,
    });
    for id in 1..config.n_sites {
        let (x, y) = place_node(&mut rng, &center, r, &obstacles, &taken).ok_or_else(|| {
            ScenarioError::PlacementFailed {
                what: format!("candidate site {id}"),
                attempts: MAX_PLACEMENT_ATTEMPTS,
            }
        })?;
        taken.push((x, y));
        sites.push(CandidateSite {
            id,
            position: Point3::new(x, y, config.site_height_m),
            is_donor_site: false,
            is_fake_ris: false,
        });
    }
    // Virtual site for the direct (no surface) association option. Placed at
    // the cell centre on the ground; its links are never evaluated.
    let fake_id = config.n_sites;
    sites.push(CandidateSite {
        id: fake_id,
        position: Point3::new(center.x, center.y, 0.0),
        is_donor_site: false,
        is_fake_ris: true,
    });
    taken.push((center.x, center.y));

    let mut test_points = Vec::with_capacity(config.n_test_points);
    for id in 0..config.n_test_points {
        let (x, y) = place_node(&mut rng, &center, r, &obstacles, &taken).ok_or_else(|| {
            ScenarioError::PlacementFailed {
                what: format!("test point {id}"),
                attempts: MAX_PLACEMENT_ATTEMPTS,
            }
        })?;
        taken.push((x, y));
        let body_orientation = rng.gen_range(0.0..2.0 * PI);
        test_points.push(TestPoint {
            id,
            position: Point3::new(x, y, config.ue_height_m),
            body_orientation,
        });
    }

    let scenario = Scenario {
        seed: config.seed,
        cell_center: center,
        cell_radius_m: r,
        ris_height_m: config.ris_height_m,
        obstacles,
        sites,
        test_points,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn sample_in_hex(rng: &mut ChaCha8Rng, center: &Point3, radius: f64) -> (f64, f64) {
    let half_h = radius * 3.0f64.sqrt() / 2.0;
    loop {
        let x = rng.gen_range(center.x - radius..center.x + radius);
        let y = rng.gen_range(center.y - half_h..center.y + half_h);
        if point_in_hex(center, radius, x, y) {
            return (x, y);
        }
    }
}

fn place_obstacle(
    rng: &mut ChaCha8Rng,
    config: &GenerationConfig,
    center: &Point3,
    donor_xy: (f64, f64),
) -> Option<Obstacle> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let (cx, cy) = sample_in_hex(rng, center, config.cell_radius_m);
        let w = rng.gen_range(config.obstacle_side_min_m..=config.obstacle_side_max_m);
        let l = rng.gen_range(config.obstacle_side_min_m..=config.obstacle_side_max_m);
        let h = rng.gen_range(config.obstacle_height_min_m..=config.obstacle_height_max_m);
        let o = Obstacle {
            min_x: cx - w / 2.0,
            min_y: cy - l / 2.0,
            max_x: cx + w / 2.0,
            max_y: cy + l / 2.0,
            height: h,
        };
        // Keep the donor rooftop and the reserved cell centre clear.
        if o.footprint_contains(donor_xy.0, donor_xy.1)
            || o.footprint_contains(center.x, center.y)
        {
            continue;
        }
        return Some(o);
    }
    None
}

fn place_node(
    rng: &mut ChaCha8Rng,
    center: &Point3,
    radius: f64,
    obstacles: &[Obstacle],
    taken: &[(f64, f64)],
) -> Option<(f64, f64)> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let (x, y) = sample_in_hex(rng, center, radius);
        if obstacles.iter().any(|o| o.footprint_contains(x, y)) {
            continue;
        }
        let too_close = taken.iter().any(|&(tx, ty)| {
            let dx = x - tx;
            let dy = y - ty;
            (dx * dx + dy * dy).sqrt() < MIN_NODE_SEPARATION_M
        });
        if too_close {
            continue;
        }
        return Some((x, y));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(seed: u64) -> GenerationConfig {
        GenerationConfig { seed, ..GenerationConfig::default() }
    }

    #[test]
    fn generation_counts_and_roles() {
        let c = GenerationConfig {
            n_sites: 25,
            n_test_points: 15,
            cell_radius_m: 150.0,
            donor_height_m: 25.0,
            site_height_m: 6.0,
            ris_height_m: 3.0,
            ue_height_m: 1.5,
            ..cfg(3)
        };
        let s = generate_instance(&c).unwrap();
        assert_eq!(s.sites.len(), 26); // 25 real + virtual direct-path site
        assert_eq!(s.test_points.len(), 15);
        assert_eq!(s.donor_index(), 0);
        assert_eq!(s.fake_ris_index(), 25);
        assert_eq!(s.real_site_indices().len(), 25);
        // Donor sits on the leftmost hexagon vertex at donor height.
        let d = &s.sites[0].position;
        assert_eq!((d.x, d.y, d.z), (-150.0, 0.0, 25.0));
        for site in &s.sites[1..25] {
            assert_eq!(site.position.z, 6.0);
        }
        for tp in &s.test_points {
            assert_eq!(tp.position.z, 1.5);
        }
        assert_eq!(s.sites[1].ris_position(s.ris_height_m).z, 3.0);
        s.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(&cfg(42)).unwrap().to_json().unwrap();
        let b = generate_instance(&cfg(42)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&cfg(43)).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_obstacles_means_all_pairs_in_los() {
        let c = GenerationConfig {
            n_sites: 1,
            n_test_points: 1,
            obstacle_density: 0.0,
            ..cfg(7)
        };
        let s = generate_instance(&c).unwrap();
        assert!(s.obstacles.is_empty());
        for site in &s.sites {
            for tp in &s.test_points {
                assert!(line_of_sight(&site.position, &tp.position, &s.obstacles));
            }
        }
    }

    #[test]
    fn nodes_avoid_footprints_and_stay_in_cell() {
        for seed in 0..20 {
            let c = GenerationConfig { obstacle_density: 6.0e-4, ..cfg(seed) };
            let s = generate_instance(&c).unwrap();
            for site in &s.sites {
                let p = &site.position;
                assert!(point_in_hex(&s.cell_center, s.cell_radius_m, p.x, p.y));
                if !site.is_fake_ris {
                    assert!(
                        !s.obstacles.iter().any(|o| o.footprint_contains(p.x, p.y)),
                        "site {} inside an obstacle footprint",
                        site.id
                    );
                }
            }
            for tp in &s.test_points {
                let p = &tp.position;
                assert!(point_in_hex(&s.cell_center, s.cell_radius_m, p.x, p.y));
                assert!(!s.obstacles.iter().any(|o| o.footprint_contains(p.x, p.y)));
                assert!((0.0..2.0 * PI).contains(&tp.body_orientation));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = generate_instance(&cfg(7)).unwrap();
        let text = s.to_json().unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(text, back.to_json().unwrap());
        // The schema uses the flat site encoding.
        assert!(text.contains("\"donor\": true"));
        assert!(text.contains("\"fake_ris\": true"));
        assert!(text.contains("\"radius\": 120.0"));
    }

    #[test]
    fn loader_rejects_missing_donor() {
        let mut s = generate_instance(&cfg(1)).unwrap();
        s.sites[0].is_donor_site = false;
        let text = s.to_json().unwrap();
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("donor"), "unexpected error: {err}");
    }

    #[test]
    fn loader_rejects_duplicate_positions() {
        let mut s = generate_instance(&cfg(1)).unwrap();
        s.sites[2].position.x = s.sites[1].position.x;
        s.sites[2].position.y = s.sites[1].position.y;
        let text = s.to_json().unwrap();
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("horizontal position"), "unexpected error: {err}");
    }

    #[test]
    fn loader_rejects_bad_obstacle() {
        let mut s = generate_instance(&cfg(2)).unwrap();
        s.obstacles.push(Obstacle { min_x: 5.0, min_y: 0.0, max_x: 4.0, max_y: 1.0, height: 3.0 });
        let text = s.to_json().unwrap();
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn loader_rejects_unknown_fields() {
        let s = generate_instance(&cfg(1)).unwrap();
        let text = s.to_json().unwrap().replace("\"seed\":", "\"sneed\":");
        assert!(Scenario::from_json(&text).is_err());
    }

    #[test]
    fn overcrowded_cell_fails_loudly() {
        let c = GenerationConfig {
            cell_radius_m: 12.0,
            obstacle_density: 0.1,
            obstacle_side_min_m: 30.0,
            obstacle_side_max_m: 40.0,
            ..cfg(5)
        };
        assert!(matches!(generate_instance(&c), Err(ScenarioError::PlacementFailed { .. })));
    }

    #[test]
    fn hex_membership() {
        let c = Point3::new(0.0, 0.0, 0.0);
        assert!(point_in_hex(&c, 100.0, 0.0, 0.0));
        assert!(point_in_hex(&c, 100.0, 100.0, 0.0)); // vertex
        assert!(point_in_hex(&c, 100.0, -100.0, 0.0)); // donor vertex
        assert!(point_in_hex(&c, 100.0, 0.0, 86.6));
        assert!(!point_in_hex(&c, 100.0, 0.0, 87.0)); // above flat edge
        assert!(!point_in_hex(&c, 100.0, 95.0, 20.0)); // outside slanted edge
        assert!(!point_in_hex(&c, 100.0, 101.0, 0.0));
    }

    #[test]
    fn hex_vertices_on_circle() {
        let c = Point3::new(0.0, 0.0, 0.0);
        let vs = hex_vertices(&c, 50.0);
        assert!((vs[0].0 - 50.0).abs() < 1e-12 && vs[0].1.abs() < 1e-12);
        assert!((vs[3].0 + 50.0).abs() < 1e-12 && vs[3].1.abs() < 1e-12);
        for (x, y) in vs {
            assert!(((x * x + y * y).sqrt() - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn azimuth_cardinal_directions() {
        let o = Point3::new(0.0, 0.0, 0.0);
        assert_eq!(azimuth(&o, &Point3::new(5.0, 0.0, 3.0)).unwrap(), 0.0);
        assert!((azimuth(&o, &Point3::new(0.0, 2.0, 0.0)).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((azimuth(&o, &Point3::new(-1.0, 0.0, 0.0)).unwrap() - PI).abs() < 1e-12);
        assert!(
            (azimuth(&o, &Point3::new(-1.0, -1.0, 0.0)).unwrap() - 5.0 * PI / 4.0).abs() < 1e-12
        );
        // Purely vertical separation has no bearing.
        assert!(azimuth(&o, &Point3::new(0.0, 0.0, 9.0)).is_err());
    }

    #[test]
    fn line_of_sight_basic_cases() {
        let wall = Obstacle { min_x: 4.0, min_y: -5.0, max_x: 6.0, max_y: 5.0, height: 10.0 };
        let a = Point3::new(0.0, 0.0, 2.0);
        let b = Point3::new(10.0, 0.0, 2.0);
        assert!(!line_of_sight(&a, &b, &[wall]));
        assert!(line_of_sight(&a, &b, &[]));
        // Tall box centred on the midpoint of a low segment: blocked.
        let tower = Obstacle { min_x: 4.0, min_y: -1.0, max_x: 6.0, max_y: 1.0, height: 50.0 };
        assert!(!line_of_sight(&a, &b, &[tower]));
        // Both endpoints at 25 m over a 5 m box: clear.
        let low = Obstacle { min_x: 4.0, min_y: -5.0, max_x: 6.0, max_y: 5.0, height: 5.0 };
        let hi_a = Point3::new(0.0, 0.0, 25.0);
        let hi_b = Point3::new(10.0, 0.0, 25.0);
        assert!(line_of_sight(&hi_a, &hi_b, &[low]));
        // Slanted ray from a rooftop down to a user: z(t) = 25 - 23.5 t,
        // above the box (t in [0.4, 0.6], z in [10.9, 15.6]) -> clear,
        // but a 16 m box intercepts it.
        let donor = Point3::new(0.0, 0.0, 25.0);
        let ue = Point3::new(10.0, 0.0, 1.5);
        assert!(line_of_sight(&donor, &ue, &[wall]));
        let tall = Obstacle { height: 16.0, ..wall };
        assert!(!line_of_sight(&donor, &ue, &[tall]));
        // Grazing the rooftop exactly counts as blocked (closed box).
        let graze_a = Point3::new(0.0, 0.0, 10.0);
        let graze_b = Point3::new(10.0, 0.0, 10.0);
        assert!(!line_of_sight(&graze_a, &graze_b, &[wall]));
        // Segment ending before the box never reaches it.
        let short_b = Point3::new(3.0, 0.0, 2.0);
        assert!(line_of_sight(&a, &short_b, &[wall]));
    }

    #[test]
    fn self_blockage_sectors() {
        let tp = TestPoint {
            id: 0,
            position: Point3::new(0.0, 0.0, 1.5),
            body_orientation: 0.0, // facing +x, blocked sector centred on -x
        };
        let fov = 2.0 * PI / 3.0; // 120 degrees
        let ahead = Point3::new(10.0, 0.0, 10.0);
        let behind = Point3::new(-10.0, 0.0, 10.0);
        assert!(!in_self_blockage(&tp, &ahead, fov).unwrap());
        assert!(in_self_blockage(&tp, &behind, fov).unwrap());
        // Just inside / outside the sector edge at pi +- fov/2.
        let a_in = PI + fov / 2.0 - 0.01;
        let a_out = PI + fov / 2.0 + 0.01;
        let edge_in = Point3::new(a_in.cos(), a_in.sin(), 0.0);
        let edge_out = Point3::new(a_out.cos(), a_out.sin(), 0.0);
        assert!(in_self_blockage(&tp, &edge_in, fov).unwrap());
        assert!(!in_self_blockage(&tp, &edge_out, fov).unwrap());
        // Exactly on the sector edge counts as blocked.
        let a_edge = PI + fov / 2.0;
        let edge = Point3::new(a_edge.cos(), a_edge.sin(), 0.0);
        assert!(in_self_blockage(&tp, &edge, fov).unwrap());
    }

    #[test]
    fn wrap_and_distance_helpers() {
        assert!((wrap_angle(-PI / 2.0) - 1.5 * PI).abs() < 1e-12);
        assert!(wrap_angle(2.0 * PI) < 1e-12);
        assert!((angle_dist(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_dist(PI, 0.0) - PI).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn azimuth_reverses_by_pi(ax in -50.0..50.0f64, ay in -50.0..50.0f64,
                                  bx in -50.0..50.0f64, by in -50.0..50.0f64) {
            prop_assume!((ax - bx).abs() > 1e-6 || (ay - by).abs() > 1e-6);
            let a = Point3::new(ax, ay, 1.0);
            let b = Point3::new(bx, by, 7.0);
            let fwd = azimuth(&a, &b).unwrap();
            let rev = azimuth(&b, &a).unwrap();
            prop_assert!(angle_dist(fwd + PI, rev) < 1e-9);
        }

        #[test]
        fn line_of_sight_is_symmetric(
            ax in -30.0..30.0f64, ay in -30.0..30.0f64, az in 0.5..30.0f64,
            bx in -30.0..30.0f64, by in -30.0..30.0f64, bz in 0.5..30.0f64,
            ox in -20.0..10.0f64, oy in -20.0..10.0f64,
            w in 1.0..15.0f64, l in 1.0..15.0f64, h in 1.0..25.0f64,
        ) {
            let a = Point3::new(ax, ay, az);
            let b = Point3::new(bx, by, bz);
            let o = Obstacle { min_x: ox, min_y: oy, max_x: ox + w, max_y: oy + l, height: h };
            prop_assert_eq!(line_of_sight(&a, &b, &[o]), line_of_sight(&b, &a, &[o]));
        }

        #[test]
        fn segment_hit_matches_sampled_points(
            ax in -30.0..30.0f64, ay in -30.0..30.0f64, az in 0.0..30.0f64,
            bx in -30.0..30.0f64, by in -30.0..30.0f64, bz in 0.0..30.0f64,
            ox in -20.0..10.0f64, oy in -20.0..10.0f64,
            w in 1.0..15.0f64, l in 1.0..15.0f64, h in 1.0..25.0f64,
        ) {
            // Dense sampling along the open segment approximates the exact
            // slab test from below: any sampled interior point inside the box
            // must imply a reported hit.
            let a = Point3::new(ax, ay, az);
            let b = Point3::new(bx, by, bz);
            let o = Obstacle { min_x: ox, min_y: oy, max_x: ox + w, max_y: oy + l, height: h };
            let hit = segment_hits_box(&a, &b, &o);
            let mut sampled_hit = false;
            for k in 1..400 {
                let t = k as f64 / 400.0;
                let x = a.x + t * (b.x - a.x);
                let y = a.y + t * (b.y - a.y);
                let z = a.z + t * (b.z - a.z);
                if x >= o.min_x && x <= o.max_x && y >= o.min_y && y <= o.max_y
                    && z >= 0.0 && z <= o.height {
                    sampled_hit = true;
                    break;
                }
            }
            if sampled_hit {
                prop_assert!(hit);
            }
        }
    }
}
