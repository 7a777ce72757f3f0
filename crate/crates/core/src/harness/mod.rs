//! Budget-sweep experiments: configuration, per-cell planning pipeline,
//! metric aggregation and plot-ready CSV/JSON emission.
//!
//! A sweep cell is one (instance, budget, formulation) triple. Cells are
//! independent and run on a bounded worker pool; output order is canonical
//! (instance, then budget, then formulation) no matter which worker
//! finishes first, and wall-clock timing is recorded only on request so
//! reruns are byte-identical.

mod emit;
mod metrics;
mod sweep;

pub use emit::{emit_aggregates, emit_results, parse_results_csv, OutputFormat};
pub use metrics::{compute_metrics, PlanMetrics};
pub use sweep::{aggregate, run_sweep, SweepOutput};

use crate::channel::RadioConfig;
use crate::planners::PlannerError;
use crate::scenario::GenerationConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results file: {0}")]
    Parse(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Which planning pipeline a sweep cell runs. `PtfHeur` is the peak
/// formulation with the forced-bottleneck restriction applied before
/// solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFormulation {
    Mtf,
    Ptf,
    PtfHeur,
}

impl fmt::Display for SweepFormulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepFormulation::Mtf => "mtf",
            SweepFormulation::Ptf => "ptf",
            SweepFormulation::PtfHeur => "ptf-heur",
        })
    }
}

impl FromStr for SweepFormulation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mtf" => Ok(SweepFormulation::Mtf),
            "ptf" => Ok(SweepFormulation::Ptf),
            "ptf-heur" => Ok(SweepFormulation::PtfHeur),
            other => Err(format!("unknown formulation {other:?} (expected mtf, ptf or ptf-heur)")),
        }
    }
}

/// Radio-chain knobs in config-file units (GHz/MHz/degrees); merged with
/// [`BlockageSection`] into a [`RadioConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub carrier_frequency_ghz: f64,
    pub bandwidth_mhz: f64,
    pub donor_eirp_dbm: f64,
    pub node_eirp_dbm: f64,
    pub ue_gain_dbi: f64,
    pub ris_elements: usize,
    pub noise_figure_db: f64,
    pub fov_deg: f64,
    pub max_link_range_m: f64,
    /// Activation floor for access links; omitted means "the demand".
    pub src_capacity_floor_mbps: Option<f64>,
}

impl Default for RadioSection {
    fn default() -> Self {
        let r = RadioConfig::default();
        Self {
            carrier_frequency_ghz: r.carrier_frequency_hz / 1e9,
            bandwidth_mhz: r.bandwidth_hz / 1e6,
            donor_eirp_dbm: r.donor_eirp_dbm,
            node_eirp_dbm: r.node_eirp_dbm,
            ue_gain_dbi: r.ue_gain_dbi,
            ris_elements: r.ris_elements,
            noise_figure_db: r.noise_figure_db,
            fov_deg: r.fov_rad.to_degrees(),
            max_link_range_m: r.max_link_range_m,
            src_capacity_floor_mbps: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockageSection {
    pub nomadic_loss_db: f64,
    pub self_loss_db: f64,
    pub nomadic_coeff_per_m: f64,
    pub self_sector_deg: f64,
}

impl Default for BlockageSection {
    fn default() -> Self {
        let r = RadioConfig::default();
        Self {
            nomadic_loss_db: r.nomadic_loss_db,
            self_loss_db: r.self_loss_db,
            nomadic_coeff_per_m: r.nomadic_coeff_per_m,
            self_sector_deg: r.self_sector_rad.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricesSection {
    pub iab: f64,
    pub ris: f64,
    /// Guaranteed per-user demand D in Mb/s.
    pub demand_mbps: f64,
}

impl Default for PricesSection {
    fn default() -> Self {
        Self { iab: 1.0, ris: 0.1, demand_mbps: 150.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Relative optimality gap at which a cell counts as solved.
    pub gap_target: f64,
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<usize>,
    /// Donor-ingress scaling for the forced-bottleneck heuristic.
    pub heuristic_fraction: f64,
    /// Worker threads for the sweep; 0 means one per available core.
    pub threads: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            gap_target: 0.05,
            time_limit_s: None,
            node_limit: None,
            heuristic_fraction: 0.5,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Explicit budget list. Leave empty to use the min/max/step range;
    /// with neither set, the desk axis 2..8 applies.
    pub budgets: Vec<f64>,
    pub budget_min: Option<f64>,
    pub budget_max: Option<f64>,
    pub budget_step: Option<f64>,
    pub instances: usize,
    /// Instance i is generated with seed `seed_base + i`.
    pub seed_base: u64,
    pub formulations: Vec<SweepFormulation>,
    /// Record wall-clock per cell. Off by default so identical configs
    /// yield byte-identical output files.
    pub timings: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            budgets: Vec::new(),
            budget_min: None,
            budget_max: None,
            budget_step: None,
            instances: 10,
            seed_base: 1,
            formulations: vec![
                SweepFormulation::Mtf,
                SweepFormulation::Ptf,
                SweepFormulation::PtfHeur,
            ],
            timings: false,
        }
    }
}

/// The one documented configuration tree: generation, radio, blockage,
/// prices, solver and sweep sections, each optional with desk-scale
/// defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub generation: GenerationConfig,
    pub radio: RadioSection,
    pub blockage: BlockageSection,
    pub prices: PricesSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

impl HarnessConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Radio + blockage sections merged into the channel model's native
    /// units, with the capacity floor defaulting to the demand.
    pub fn radio_config(&self) -> RadioConfig {
        RadioConfig {
            carrier_frequency_hz: self.radio.carrier_frequency_ghz * 1e9,
            bandwidth_hz: self.radio.bandwidth_mhz * 1e6,
            donor_eirp_dbm: self.radio.donor_eirp_dbm,
            node_eirp_dbm: self.radio.node_eirp_dbm,
            ue_gain_dbi: self.radio.ue_gain_dbi,
            ris_elements: self.radio.ris_elements,
            noise_figure_db: self.radio.noise_figure_db,
            fov_rad: self.radio.fov_deg.to_radians(),
            nomadic_loss_db: self.blockage.nomadic_loss_db,
            self_loss_db: self.blockage.self_loss_db,
            nomadic_coeff_per_m: self.blockage.nomadic_coeff_per_m,
            self_sector_rad: self.blockage.self_sector_deg.to_radians(),
            max_link_range_m: self.radio.max_link_range_m,
            src_capacity_floor_mbps: self
                .radio
                .src_capacity_floor_mbps
                .unwrap_or(self.prices.demand_mbps),
        }
    }

    /// The budget axis: the explicit list, the inclusive min/max/step
    /// range, or (with neither given) the desk axis 2..8.
    pub fn budgets(&self) -> Result<Vec<f64>, HarnessError> {
        let s = &self.sweep;
        let has_range =
            s.budget_min.is_some() || s.budget_max.is_some() || s.budget_step.is_some();
        let list = if !s.budgets.is_empty() {
            if has_range {
                return Err(HarnessError::Config(
                    "give either an explicit budget list or a min/max/step range, not both".into(),
                ));
            }
            s.budgets.clone()
        } else if has_range {
            match (s.budget_min, s.budget_max, s.budget_step) {
                (Some(lo), Some(hi), Some(step)) => {
                    if !(step > 0.0) || hi < lo {
                        return Err(HarnessError::Config(
                            "budget range needs max >= min and a positive step".into(),
                        ));
                    }
                    let n = ((hi - lo) / step + 0.5).floor() as usize;
                    (0..=n).map(|i| lo + step * i as f64).collect()
                }
                _ => {
                    return Err(HarnessError::Config(
                        "incomplete budget range: set all of budget_min/max/step".into(),
                    ))
                }
            }
        } else {
            (2..=8).map(f64::from).collect()
        };
        if list.is_empty() {
            return Err(HarnessError::Config("budget list is empty".into()));
        }
        if list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HarnessError::Config("budgets must be strictly increasing".into()));
        }
        if list.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(HarnessError::Config("budgets must be finite and nonnegative".into()));
        }
        Ok(list)
    }

    /// Formulations in canonical order, deduplicated.
    pub fn formulations(&self) -> Vec<SweepFormulation> {
        let mut forms = self.sweep.formulations.clone();
        forms.sort();
        forms.dedup();
        forms
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.generation
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.radio_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.sweep.instances < 1 {
            return Err(HarnessError::Config("need at least one instance".into()));
        }
        if self.sweep.formulations.is_empty() {
            return Err(HarnessError::Config("no formulations selected".into()));
        }
        if !(self.prices.iab > 0.0) || !(self.prices.ris > 0.0) {
            return Err(HarnessError::Config("prices must be positive".into()));
        }
        if !(self.prices.demand_mbps > 0.0) {
            return Err(HarnessError::Config("demand must be positive".into()));
        }
        if !(self.solver.gap_target >= 0.0) {
            return Err(HarnessError::Config("gap target must be nonnegative".into()));
        }
        if !(self.solver.heuristic_fraction > 0.0 && self.solver.heuristic_fraction <= 1.0) {
            return Err(HarnessError::Config("heuristic fraction must lie in (0, 1]".into()));
        }
        self.budgets()?;
        Ok(())
    }
}

/// One sweep cell's outcome. Metric fields are NaN (and counts zero) when
/// the cell did not produce a usable plan; `status` says why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: usize,
    pub budget: f64,
    pub formulation: SweepFormulation,
    pub iab_count: usize,
    pub ris_count: usize,
    pub mean_tput: f64,
    pub peak_tput: f64,
    pub avg_hops: f64,
    pub donor_degree: usize,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub wall_ms: u64,
    /// optimal | gap | limit | infeasible | unbounded | check-failed: … | error: …
    pub status: String,
}

impl InstanceResult {
    /// Whether the cell contributes to aggregates: solve met the gap
    /// target and the plan passed the independent checker.
    pub fn counts_for_aggregates(&self) -> bool {
        matches!(self.status.as_str(), "optimal" | "gap")
    }
}

/// Per-(budget, formulation) mean and sample standard deviation of every
/// figure metric, over the cells that met the gap target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub budget: f64,
    pub formulation: SweepFormulation,
    /// Contributing instance count.
    pub n: usize,
    pub iab_count_mean: f64,
    pub iab_count_std: f64,
    pub ris_count_mean: f64,
    pub ris_count_std: f64,
    pub mean_tput_mean: f64,
    pub mean_tput_std: f64,
    pub peak_tput_mean: f64,
    pub peak_tput_std: f64,
    pub avg_hops_mean: f64,
    pub avg_hops_std: f64,
    pub donor_degree_mean: f64,
    pub donor_degree_std: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_desk_scale() {
        let cfg = HarnessConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.generation.n_sites, 8);
        assert_eq!(cfg.generation.n_test_points, 5);
        assert_eq!(cfg.budgets().unwrap(), vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(cfg.sweep.instances, 10);
        assert!((cfg.solver.gap_target - 0.05).abs() < 1e-12);
    }

    #[test]
    fn budget_range_expands_inclusively() {
        let mut cfg = HarnessConfig::default();
        cfg.sweep.budgets.clear();
        cfg.sweep.budget_min = Some(6.0);
        cfg.sweep.budget_max = Some(20.0);
        cfg.sweep.budget_step = Some(0.2);
        let budgets = cfg.budgets().unwrap();
        assert_eq!(budgets.len(), 71);
        assert!((budgets[0] - 6.0).abs() < 1e-12);
        assert!((budgets[70] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn config_rejects_bad_trees() {
        assert!(HarnessConfig::from_toml_str("[sweep]\nbudgets = [3.0, 2.0]").is_err());
        assert!(HarnessConfig::from_toml_str("[sweep]\ninstances = 0").is_err());
        assert!(HarnessConfig::from_toml_str("[prices]\niab = -1.0").is_err());
        assert!(HarnessConfig::from_toml_str("[typo]\nx = 1").is_err());
        assert!(HarnessConfig::from_toml_str("[solver]\nheuristic_fraction = 0.0").is_err());
        // Both a list and a range is ambiguous.
        let both = "[sweep]\nbudgets = [2.0]\nbudget_min = 1.0\nbudget_max = 2.0\nbudget_step = 0.5";
        assert!(HarnessConfig::from_toml_str(both).is_err());
    }

    #[test]
    fn sections_merge_into_radio_config() {
        let text = r#"
            [radio]
            carrier_frequency_ghz = 28.0
            fov_deg = 90.0
            [blockage]
            self_sector_deg = 60.0
            [prices]
            demand_mbps = 200.0
        "#;
        let cfg = HarnessConfig::from_toml_str(text).unwrap();
        let radio = cfg.radio_config();
        assert!((radio.carrier_frequency_hz - 28.0e9).abs() < 1.0);
        assert!((radio.fov_rad - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((radio.self_sector_rad - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
        // Floor follows the demand when not pinned.
        assert!((radio.src_capacity_floor_mbps - 200.0).abs() < 1e-12);
    }

    #[test]
    fn formulation_strings_round_trip() {
        for f in [SweepFormulation::Mtf, SweepFormulation::Ptf, SweepFormulation::PtfHeur] {
            assert_eq!(f.to_string().parse::<SweepFormulation>().unwrap(), f);
        }
        assert!("peak".parse::<SweepFormulation>().is_err());
    }

    #[test]
    fn shipped_profiles_parse() {
        let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
        for name in ["desk.toml", "paper.toml"] {
            let path = std::path::Path::new(root).join("configs").join(name);
            let cfg = HarnessConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap();
        }
    }
}
