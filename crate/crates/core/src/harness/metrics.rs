//! Topology metrics for the figure panels: device counts, hops, donor
//! degree, and the two cross-evaluated throughputs.

use crate::planners::{evaluate_mean, evaluate_peak, Plan, PlannerError, PlanningInput};

/// Flows below this (Mb/s) don't count as "carrying traffic".
const FLOW_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanMetrics {
    pub iab_count: usize,
    pub ris_count: usize,
    /// Mb/s per user with the topology fixed and mean throughput maximized.
    pub mean_tput: f64,
    /// Mb/s per user with the topology fixed and peak throughput maximized.
    pub peak_tput: f64,
    /// Donor-to-user hop count averaged over users; direct service is 1.
    pub avg_hops: f64,
    /// Flow-carrying tree edges at the donor.
    pub donor_degree: usize,
}

/// Derives the figure metrics from a feasible plan. The throughputs come
/// from re-optimizing the continuous rates on the fixed topology, so both
/// are defined for plans of either formulation.
pub fn compute_metrics(plan: &Plan, input: &PlanningInput) -> Result<PlanMetrics, PlannerError> {
    let n = input.n_sites();
    let donor = input.donor();
    let (iab_count, ris_count) = plan.device_counts(&input.scenario);

    // Depth of each base station in the relay tree, donor = 0.
    let mut parent = vec![None; n];
    for e in &plan.tree_edges {
        parent[e.to] = Some(e.from);
    }
    let depth = |mut c: usize| -> Result<usize, PlannerError> {
        let mut d = 0;
        while c != donor {
            match parent[c] {
                Some(p) => {
                    c = p;
                    d += 1;
                }
                None => {
                    return Err(PlannerError::Evaluation(format!(
                        "serving base station {c} is not connected to the donor"
                    )))
                }
            }
            if d > n {
                return Err(PlannerError::Evaluation("relay tree contains a cycle".into()));
            }
        }
        Ok(d)
    };
    let mut hops_total = 0usize;
    for a in &plan.src_assignments {
        hops_total += depth(a.bs)? + 1;
    }
    let avg_hops = hops_total as f64 / plan.src_assignments.len().max(1) as f64;

    let donor_degree = plan
        .tree_edges
        .iter()
        .filter(|e| (e.from == donor || e.to == donor) && e.flow_mbps > FLOW_EPS)
        .count();

    Ok(PlanMetrics {
        iab_count,
        ris_count,
        mean_tput: evaluate_mean(plan, input)?,
        peak_tput: evaluate_peak(plan, input)?,
        avg_hops,
        donor_degree,
    })
}
