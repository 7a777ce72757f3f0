use ranplan::channel::{build_link_parameters, RadioConfig};
use ranplan::milp::{
    presolve, solve_bounded_lp, solve_branch_and_bound, PresolveOutcome, SolveOptions,
};
use ranplan::planners::{build_mtf, build_ptf, PlanningInput};
use ranplan::scenario::{generate_instance, GenerationConfig};
use std::time::Instant;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let budget: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let nodes: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(400);
    let gen = GenerationConfig { seed, ..Default::default() };
    let scen = generate_instance(&gen).unwrap();
    let links = build_link_parameters(&scen, &RadioConfig::default()).unwrap();
    let input = PlanningInput {
        scenario: scen,
        link_params: links,
        budget,
        demand_mbps: 150.0,
        price_iab: 1.0,
        price_ris: 0.1,
    };
    {
        // Per-user integral serving caps: with sum x[t,.] = 1, the extra for
        // user t is at most the best admissible option's bottleneck.
        let lp = &input.link_params;
        let n = input.n_sites();
        let donor = input.donor();
        let fake = input.fake();
        let mut total = 0.0;
        for t in 0..input.n_tps() {
            let mut best: f64 = 0.0;
            for c in 0..n {
                for r in 0..n {
                    if !lp.delta_src[t][c][r] {
                        continue;
                    }
                    let mut k = lp.cap_src[t][c][r].min(lp.m_max);
                    if r != fake {
                        k = k.min(lp.cap_ris[t][c][r]);
                    }
                    if c != donor {
                        let inbound = (0..n)
                            .filter(|&d| lp.delta_bh[d][c])
                            .map(|d| lp.cap_bh[d][c])
                            .fold(0.0f64, f64::max);
                        k = k.min(inbound);
                    }
                    best = best.max(k);
                }
            }
            println!("  user {t}: best integral serving cap {best:.2}");
            total += best;
        }
        println!("  sum of per-user caps = {total:.2} (vs m_max {:.2} x {} users)", lp.m_max, input.n_tps());
    }
    for (name, built) in [("mtf", build_mtf(&input)), ("ptf", build_ptf(&input))] {
        let (m, _vm) = built.unwrap();
        let t0 = Instant::now();
        let pm = match presolve(&m) {
            PresolveOutcome::Reduced(p) => p,
            PresolveOutcome::Infeasible => panic!("infeasible in presolve"),
        };
        let t_pre = t0.elapsed();
        let t0 = Instant::now();
        let out = solve_bounded_lp(&pm.core, &pm.core_lb, &pm.core_ub);
        println!(
            "{name}: {}x{} -> core {}x{} | presolve {:?} | root LP {:?} obj {:.2} iters {} in {:?}",
            m.constraints.len(),
            m.vars.len(),
            pm.core.m,
            pm.core.n,
            t_pre,
            out.status,
            out.objective + pm.objective_constant,
            out.iterations,
            t0.elapsed()
        );
        let t0 = Instant::now();
        let opts = SolveOptions {
            gap_target: 0.05,
            node_limit: Some(nodes),
            ..Default::default()
        };
        let sol = solve_branch_and_bound(&m, &opts).unwrap();
        println!(
            "  bb: {:?} obj {:.2} bound {:.2} gap {:.4} | {} nodes {} iters in {:?} ({:.1} iters/node)",
            sol.status,
            sol.objective,
            sol.best_bound,
            sol.gap,
            sol.stats.nodes,
            sol.stats.simplex_iterations,
            t0.elapsed(),
            sol.stats.simplex_iterations as f64 / sol.stats.nodes.max(1) as f64,
        );
    }
}
