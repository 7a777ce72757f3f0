//! Branch and bound over the LP relaxation.
//!
//! Every node re-runs presolve with its branching fixes applied, then solves
//! the reduced LP from scratch (no warm starts); fixing a few binaries
//! cascades through budget/degree rows and shrinks the node LPs hard. The
//! search dives along preferred children until the path prunes or bottoms
//! out, then backtracks to the best open bound, with ties broken by node
//! creation order, which makes runs deterministic. Branching picks the
//! fractional binary in the highest priority band, then the most
//! fractional, ties to the smallest id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use super::presolve::{presolve, presolve_bounded, PresolveOutcome, PresolvedModel};
use super::simplex::{solve_bounded_lp, LpStatus};
use super::{relative_gap, MilpError, Model, Sense, Solution, SolveOptions, SolveStats, Status, VarKind};
use crate::tol::{FEASIBILITY_TOL, INTEGRALITY_TOL, RESIDUAL_TOL};

/// Wall-clock shim: on targets without a monotonic clock the solver simply
/// never times out and reports zero elapsed time.
struct Timer {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Timer {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    fn exceeded(&self, limit: Option<std::time::Duration>) -> bool {
        #[cfg(not(target_arch = "wasm32"))]
        {
            limit.is_some_and(|l| self.start.elapsed() >= l)
        }
        #[cfg(target_arch = "wasm32")]
        {
            let _ = limit;
            false
        }
    }
}

/// Persistent chain of branching decisions in original variable ids,
/// shared between siblings.
struct Fix {
    var: usize,
    val: f64,
    parent: Option<Rc<Fix>>,
}

struct Node {
    /// Upper bound inherited from the parent LP.
    bound: f64,
    seq: u64,
    fixes: Option<Rc<Fix>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: highest bound first; among equals, earliest creation.
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Original-space bounds for a node: model bounds plus its fix chain.
fn materialize_bounds(model: &Model, fixes: &Option<Rc<Fix>>) -> (Vec<f64>, Vec<f64>) {
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut cur = fixes.as_ref();
    while let Some(f) = cur {
        lb[f.var] = f.val;
        ub[f.var] = f.val;
        cur = f.parent.as_ref();
    }
    (lb, ub)
}

/// Branching choice as (original id, fractional value): highest priority
/// band first, then most fractional, ties to the smallest original id.
fn pick_branch_var(model: &Model, pm: &PresolvedModel, x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, i32, f64)> = None; // (orig, value, prio, dist)
    for (k, (&v, &is_bin)) in x.iter().zip(pm.core_is_binary.iter()).enumerate() {
        if !is_bin {
            continue;
        }
        let dist = (v - v.round()).abs();
        if dist <= INTEGRALITY_TOL {
            continue;
        }
        let orig = pm.core_to_orig[k];
        let prio = model.vars[orig].branch_priority;
        let better = match best {
            None => true,
            Some((_, _, bp, bd)) => prio > bp || (prio == bp && dist > bd + 1e-15),
        };
        if better {
            best = Some((orig, v, prio, dist));
        }
    }
    best.map(|(orig, v, _, _)| (orig, v))
}

/// Fallback split for a node whose LP stalled: any still-free binary,
/// highest priority band first, ties to the smallest original id.
fn pick_stall_split(model: &Model, pm: &PresolvedModel) -> Option<usize> {
    let mut best: Option<(usize, i32)> = None;
    for (k, &is_bin) in pm.core_is_binary.iter().enumerate() {
        if !is_bin {
            continue;
        }
        let orig = pm.core_to_orig[k];
        let prio = model.vars[orig].branch_priority;
        if best.is_none_or(|(bo, bp)| prio > bp || (prio == bp && orig < bo)) {
            best = Some((orig, prio));
        }
    }
    best.map(|(orig, _)| orig)
}

/// Checks a candidate against the original model. Defensive: branch and
/// bound must never accept a point the model itself rejects.
fn verify_on_model(model: &Model, x: &[f64]) -> bool {
    for v in &model.vars {
        let val = x[v.id];
        if val < v.lower - FEASIBILITY_TOL * (1.0 + v.lower.abs())
            || val > v.upper + FEASIBILITY_TOL * (1.0 + v.upper.abs())
        {
            return false;
        }
        if v.kind == VarKind::Binary && (val - val.round()).abs() > INTEGRALITY_TOL {
            return false;
        }
    }
    for c in &model.constraints {
        let lhs = c.expr.value(x);
        let scale = 1.0 + c.rhs.abs();
        let ok = match c.sense {
            Sense::Le => lhs <= c.rhs + RESIDUAL_TOL * scale,
            Sense::Ge => lhs >= c.rhs - RESIDUAL_TOL * scale,
            Sense::Eq => (lhs - c.rhs).abs() <= RESIDUAL_TOL * scale,
        };
        if !ok {
            return false;
        }
    }
    true
}

fn infeasible_solution(stats: SolveStats) -> Solution {
    Solution {
        status: Status::Infeasible,
        values: vec![],
        objective: f64::NEG_INFINITY,
        best_bound: f64::NEG_INFINITY,
        gap: 0.0,
        stats,
    }
}

/// Solves the continuous relaxation (binaries relaxed to their bounds).
pub fn solve_lp_relaxation(model: &Model) -> Result<Solution, MilpError> {
    model.validate()?;
    let timer = Timer::start();
    let pm = match presolve(model) {
        PresolveOutcome::Infeasible => {
            return Ok(infeasible_solution(SolveStats {
                nodes: 0,
                simplex_iterations: 0,
                wall_ms: timer.elapsed_ms(),
            }))
        }
        PresolveOutcome::Reduced(p) => p,
    };
    let out = solve_bounded_lp(&pm.core, &pm.core_lb, &pm.core_ub);
    let stats = SolveStats {
        nodes: 1,
        simplex_iterations: out.iterations,
        wall_ms: timer.elapsed_ms(),
    };
    let sol = match out.status {
        LpStatus::Optimal => {
            let values = pm.restore(&out.x);
            let objective = model.objective.value(&values);
            Solution {
                status: Status::Optimal,
                values,
                objective,
                best_bound: objective,
                gap: 0.0,
                stats,
            }
        }
        LpStatus::Infeasible => infeasible_solution(stats),
        LpStatus::Unbounded => Solution {
            status: Status::Unbounded,
            values: vec![],
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            gap: 0.0,
            stats,
        },
        LpStatus::Stalled => Solution {
            status: Status::Limit,
            values: vec![],
            objective: f64::NEG_INFINITY,
            best_bound: f64::INFINITY,
            gap: f64::INFINITY,
            stats,
        },
    };
    Ok(sol)
}

/// Branch and bound for maximization MILPs with binary integer variables.
pub fn solve_branch_and_bound(model: &Model, opts: &SolveOptions) -> Result<Solution, MilpError> {
    model.validate()?;
    let timer = Timer::start();
    let mut stats = SolveStats::default();

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut seq: u64 = 0;
    let mut dfs: Vec<Node> = vec![Node { bound: f64::INFINITY, seq, fixes: None }];
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut numerical_failure = false;
    let mut root_unbounded = false;

    loop {
        // Dive while the current path stays alive (the dive stack holds at
        // most the preferred child), then resume from the best open bound.
        let node = match dfs.pop() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => n,
                None => break,
            },
        };

        // Lazy prune and stop checks. The gap stop must look at the global
        // bound: a dive node can sit well below the best open node.
        if let Some((inc_obj, _)) = &incumbent {
            let scale = inc_obj.abs().max(crate::tol::GAP_EPS);
            if node.bound <= inc_obj + 1e-9 * scale.max(1.0) {
                continue;
            }
            let global_bound = heap.peek().map_or(node.bound, |t| node.bound.max(t.bound));
            if opts.gap_target > 0.0 && relative_gap(global_bound, *inc_obj) <= opts.gap_target {
                let sol = finish(incumbent, global_bound, Status::GapReached, stats, timer);
                return Ok(sol);
            }
        }
        if opts.node_limit.is_some_and(|l| stats.nodes >= l) || timer.exceeded(opts.time_limit) {
            // Keep the sharpest surviving bound for reporting.
            let mut bound = node.bound;
            if let Some(top) = heap.peek() {
                bound = bound.max(top.bound);
            }
            for n in &dfs {
                bound = bound.max(n.bound);
            }
            let sol = finish(incumbent, bound, Status::Limit, stats, timer);
            return Ok(sol);
        }

        let (lb, ub) = materialize_bounds(model, &node.fixes);
        stats.nodes += 1;
        let pm = match presolve_bounded(model, lb, ub) {
            PresolveOutcome::Infeasible => continue,
            PresolveOutcome::Reduced(p) => p,
        };
        let out = solve_bounded_lp(&pm.core, &pm.core_lb, &pm.core_ub);
        stats.simplex_iterations += out.iterations;

        // Fixes the children inherit: the node's chain, possibly extended by
        // reduced-cost fixing below.
        let mut chain = node.fixes.clone();

        // Branching decision: (variable, explore-1-first, bound for children).
        let (k, up_first, child_bound) = match out.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.fixes.is_none() && incumbent.is_none() {
                    root_unbounded = true;
                    break;
                }
                // A restriction of a bounded parent cannot be unbounded.
                numerical_failure = true;
                break;
            }
            LpStatus::Stalled => {
                // The LP would not converge even after the perturbation
                // retry. Stay exact: split the node on an unfixed binary
                // without pruning anything — children carry the parent
                // bound, presolve smaller, and eventually solve.
                match pick_stall_split(model, &pm) {
                    Some(orig) => (orig, true, node.bound),
                    None => {
                        // All binaries fixed and the pure LP still stalls.
                        numerical_failure = true;
                        break;
                    }
                }
            }
            LpStatus::Optimal => {
                let node_bound = out.objective + pm.objective_constant;
                if let Some((inc_obj, _)) = &incumbent {
                    let scale = inc_obj.abs().max(1.0);
                    if node_bound <= inc_obj + 1e-9 * scale {
                        continue;
                    }
                }
                match pick_branch_var(model, &pm, &out.x) {
                    None => {
                        // Integral: candidate incumbent. Snap binaries
                        // exactly and re-verify against the original model
                        // before accepting.
                        let mut core_x = out.x;
                        for (k, v) in core_x.iter_mut().enumerate() {
                            if pm.core_is_binary[k] {
                                *v = v.round();
                            }
                        }
                        let values = pm.restore(&core_x);
                        if verify_on_model(model, &values) {
                            let obj = model.objective.value(&values);
                            let improved =
                                incumbent.as_ref().is_none_or(|(cur, _)| obj > *cur);
                            if improved {
                                incumbent = Some((obj, values));
                            }
                            continue;
                        }
                        debug_assert!(false, "incumbent failed original-model verification");
                        numerical_failure = true;
                        break;
                    }
                    Some((k, v)) => (k, v >= 0.5, node_bound),
                }
            }
        };

        // The preferred child continues the dive; its sibling waits in the
        // best-bound heap (created later, so it loses bound ties).
        let child = |seq: u64, val: f64| Node {
            bound: child_bound,
            seq,
            fixes: Some(Rc::new(Fix { var: k, val, parent: node.fixes.clone() })),
        };
        seq += 1;
        let first = child(seq, if up_first { 1.0 } else { 0.0 });
        seq += 1;
        let second = child(seq, if up_first { 0.0 } else { 1.0 });
        dfs.push(first);
        heap.push(second);
    }

    if root_unbounded {
        stats.wall_ms = timer.elapsed_ms();
        return Ok(Solution {
            status: Status::Unbounded,
            values: vec![],
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            gap: 0.0,
            stats,
        });
    }
    if numerical_failure {
        let mut bound = f64::NEG_INFINITY;
        if let Some(top) = heap.peek() {
            bound = bound.max(top.bound);
        }
        for n in &dfs {
            bound = bound.max(n.bound);
        }
        if let Some((inc, _)) = &incumbent {
            bound = bound.max(*inc);
        }
        if bound == f64::NEG_INFINITY {
            // Nothing trustworthy survived; the bound is unknown.
            bound = f64::INFINITY;
        }
        return Ok(finish(incumbent, bound, Status::Limit, stats, timer));
    }

    // Search exhausted: the incumbent is proven optimal, or none exists.
    match incumbent {
        None => {
            stats.wall_ms = timer.elapsed_ms();
            Ok(infeasible_solution(stats))
        }
        Some((obj, values)) => {
            stats.wall_ms = timer.elapsed_ms();
            Ok(Solution {
                status: Status::Optimal,
                values,
                objective: obj,
                best_bound: obj,
                gap: 0.0,
                stats,
            })
        }
    }
}

fn finish(
    incumbent: Option<(f64, Vec<f64>)>,
    bound: f64,
    status: Status,
    mut stats: SolveStats,
    timer: Timer,
) -> Solution {
    stats.wall_ms = timer.elapsed_ms();
    match incumbent {
        Some((obj, values)) => {
            let bound = bound.max(obj);
            Solution {
                status,
                values,
                objective: obj,
                best_bound: bound,
                gap: relative_gap(bound, obj),
                stats,
            }
        }
        None => Solution {
            status,
            values: vec![],
            objective: f64::NEG_INFINITY,
            best_bound: bound,
            gap: f64::INFINITY,
            stats,
        },
    }
}
