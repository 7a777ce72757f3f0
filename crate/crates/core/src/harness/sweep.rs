//! Sweep execution: one job per (instance, budget, formulation) cell, a
//! bounded worker pool, canonical-order results and per-cell failure
//! isolation.

use super::{
    compute_metrics, AggregateRow, HarnessConfig, HarnessError, InstanceResult, SweepFormulation,
};
use crate::channel::{build_link_parameters, LinkParameters};
use crate::milp::{solve_branch_and_bound, SolveOptions, Status};
use crate::planners::{
    apply_forced_bottleneck, build_mtf, build_ptf, check_feasibility, decode, PlanningInput,
};
use crate::scenario::{generate_instance, Scenario};
use serde::Serialize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub results: Vec<InstanceResult>,
    pub aggregates: Vec<AggregateRow>,
}

/// Everything a single cell needs, precomputed once per instance.
enum InstanceState {
    Ready(Box<(Scenario, LinkParameters)>),
    Failed(String),
}

fn prepare_instances(config: &HarnessConfig) -> Vec<InstanceState> {
    let radio = config.radio_config();
    (0..config.sweep.instances)
        .map(|i| {
            let mut gen = config.generation.clone();
            gen.seed = config.sweep.seed_base + i as u64;
            let scenario = match generate_instance(&gen) {
                Ok(s) => s,
                Err(e) => return InstanceState::Failed(format!("generation: {e}")),
            };
            match build_link_parameters(&scenario, &radio) {
                Ok(lp) => InstanceState::Ready(Box::new((scenario, lp))),
                Err(e) => InstanceState::Failed(format!("channel: {e}")),
            }
        })
        .collect()
}

fn failed_cell(
    instance: usize,
    budget: f64,
    formulation: SweepFormulation,
    status: String,
) -> InstanceResult {
    InstanceResult {
        instance,
        budget,
        formulation,
        iab_count: 0,
        ris_count: 0,
        mean_tput: f64::NAN,
        peak_tput: f64::NAN,
        avg_hops: f64::NAN,
        donor_degree: 0,
        objective: f64::NAN,
        bound: f64::NAN,
        gap: f64::NAN,
        wall_ms: 0,
        status,
    }
}

/// Runs one cell end to end: build, solve, decode, audit, cross-evaluate.
/// Never panics the sweep; failures come back as a status string.
fn run_cell(
    instance: usize,
    scenario: &Scenario,
    links: &LinkParameters,
    budget: f64,
    formulation: SweepFormulation,
    config: &HarnessConfig,
) -> InstanceResult {
    let input = PlanningInput {
        scenario: scenario.clone(),
        link_params: links.clone(),
        budget,
        demand_mbps: config.prices.demand_mbps,
        price_iab: config.prices.iab,
        price_ris: config.prices.ris,
    };
    let started = Instant::now();
    let built = match formulation {
        SweepFormulation::Mtf => build_mtf(&input),
        SweepFormulation::Ptf => build_ptf(&input),
        SweepFormulation::PtfHeur => build_ptf(&input).map(|(m, vm)| {
            let restricted = apply_forced_bottleneck(&m, &vm, config.solver.heuristic_fraction);
            (restricted, vm)
        }),
    };
    let (model, varmap) = match built {
        Ok(b) => b,
        Err(e) => return failed_cell(instance, budget, formulation, format!("error: {e}")),
    };
    let opts = SolveOptions {
        gap_target: config.solver.gap_target,
        time_limit: config.solver.time_limit_s.map(std::time::Duration::from_secs_f64),
        node_limit: config.solver.node_limit,
    };
    let sol = match solve_branch_and_bound(&model, &opts) {
        Ok(s) => s,
        Err(e) => return failed_cell(instance, budget, formulation, format!("error: {e}")),
    };
    let status = match sol.status {
        Status::Optimal => "optimal",
        Status::GapReached => "gap",
        Status::Infeasible => {
            return failed_cell(instance, budget, formulation, "infeasible".into())
        }
        Status::Unbounded => {
            return failed_cell(instance, budget, formulation, "unbounded".into())
        }
        Status::Limit => "limit",
    };
    if !sol.has_values() {
        return failed_cell(instance, budget, formulation, status.to_string());
    }
    let plan = match decode(&sol, &varmap, &input) {
        Ok(p) => p,
        Err(e) => return failed_cell(instance, budget, formulation, format!("error: {e}")),
    };
    let report = check_feasibility(&plan, &input);
    if !report.pass {
        let worst = report
            .families
            .iter()
            .filter(|f| !f.pass)
            .map(|f| f.family.clone())
            .collect::<Vec<_>>()
            .join(", ");
        return failed_cell(instance, budget, formulation, format!("check-failed: {worst}"));
    }
    let metrics = match compute_metrics(&plan, &input) {
        Ok(m) => m,
        Err(e) => return failed_cell(instance, budget, formulation, format!("error: {e}")),
    };
    let wall_ms = if config.sweep.timings { started.elapsed().as_millis() as u64 } else { 0 };
    InstanceResult {
        instance,
        budget,
        formulation,
        iab_count: metrics.iab_count,
        ris_count: metrics.ris_count,
        mean_tput: metrics.mean_tput,
        peak_tput: metrics.peak_tput,
        avg_hops: metrics.avg_hops,
        donor_degree: metrics.donor_degree,
        objective: plan.objective,
        bound: plan.best_bound,
        gap: plan.gap,
        wall_ms,
        status: status.to_string(),
    }
}

/// Runs the full experiment described by the config. Results come back in
/// canonical (instance, budget, formulation) order together with
/// per-(budget, formulation) aggregates over the cells that met the gap
/// target.
pub fn run_sweep(config: &HarnessConfig) -> Result<SweepOutput, HarnessError> {
    config.validate()?;
    let budgets = config.budgets()?;
    let forms = config.formulations();
    let instances = prepare_instances(config);

    // Canonical job list; the results vector mirrors it index-for-index.
    let mut jobs: Vec<(usize, f64, SweepFormulation)> =
        Vec::with_capacity(instances.len() * budgets.len() * forms.len());
    for i in 0..instances.len() {
        for &b in &budgets {
            for &f in &forms {
                jobs.push((i, b, f));
            }
        }
    }
    let results: Mutex<Vec<Option<InstanceResult>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = match config.solver.threads {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        n => n,
    }
    .min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() {
                    break;
                }
                let (i, budget, form) = jobs[j];
                let cell = match &instances[i] {
                    InstanceState::Ready(state) => {
                        let (scenario, links) = state.as_ref();
                        run_cell(i, scenario, links, budget, form, config)
                    }
                    InstanceState::Failed(msg) => {
                        failed_cell(i, budget, form, format!("error: {msg}"))
                    }
                };
                results.lock().expect("worker poisoned the results")[j] = Some(cell);
            });
        }
    });

    let results: Vec<InstanceResult> = results
        .into_inner()
        .expect("worker poisoned the results")
        .into_iter()
        .map(|r| r.expect("every job produces a result"))
        .collect();
    let aggregates = aggregate(&results, &budgets, &forms);
    Ok(SweepOutput { results, aggregates })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-(budget, formulation) sample statistics over the cells that met the
/// gap target.
pub fn aggregate(
    results: &[InstanceResult],
    budgets: &[f64],
    forms: &[SweepFormulation],
) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for &budget in budgets {
        for &formulation in forms {
            let cells: Vec<&InstanceResult> = results
                .iter()
                .filter(|r| {
                    r.budget == budget && r.formulation == formulation && r.counts_for_aggregates()
                })
                .collect();
            let stat = |f: &dyn Fn(&InstanceResult) -> f64| {
                mean_std(&cells.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (iab_count_mean, iab_count_std) = stat(&|r| r.iab_count as f64);
            let (ris_count_mean, ris_count_std) = stat(&|r| r.ris_count as f64);
            let (mean_tput_mean, mean_tput_std) = stat(&|r| r.mean_tput);
            let (peak_tput_mean, peak_tput_std) = stat(&|r| r.peak_tput);
            let (avg_hops_mean, avg_hops_std) = stat(&|r| r.avg_hops);
            let (donor_degree_mean, donor_degree_std) = stat(&|r| r.donor_degree as f64);
            rows.push(AggregateRow {
                budget,
                formulation,
                n: cells.len(),
                iab_count_mean,
                iab_count_std,
                ris_count_mean,
                ris_count_std,
                mean_tput_mean,
                mean_tput_std,
                peak_tput_mean,
                peak_tput_std,
                avg_hops_mean,
                avg_hops_std,
                donor_degree_mean,
                donor_degree_std,
            });
        }
    }
    rows
}
