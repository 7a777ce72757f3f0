//! Command-line front end: instance generation, single-shot planning,
//! budget sweeps, plan auditing, MPS export and the tiny-instance oracle.
//!
//! Exit codes: 0 on success, 1 on errors, 2 when a requested feasibility
//! check ran to completion and failed.

use clap::{Parser, Subcommand};
use ranplan::channel::build_link_parameters;
use ranplan::harness::{
    emit_aggregates, emit_results, run_sweep, HarnessConfig, OutputFormat, SweepFormulation,
};
use ranplan::milp::{
    export_mps, import_solution, solve_branch_and_bound, Model, Solution, SolveOptions, Status,
};
use ranplan::planners::{
    apply_forced_bottleneck, brute_force_oracle, build_mtf, build_ptf, check_feasibility, decode,
    evaluate_mean, evaluate_peak, Formulation, PlannerError, PlanningInput, VarMap,
};
use ranplan::scenario::{generate_instance, Scenario};
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ranplan",
    version,
    about = "Planning toolkit for mm-Wave IAB networks with reflective surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random urban instance and print it as scenario JSON.
    Generate {
        /// TOML configuration file; built-in desk-scale defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the generation seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one instance under one formulation and print the plan JSON.
    Plan {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Deployment budget in cost units.
        #[arg(long)]
        budget: f64,
        /// mtf, ptf or ptf-heur.
        #[arg(long, default_value = "mtf")]
        formulation: SweepFormulation,
        /// Relative optimality gap target; overrides the config.
        #[arg(long)]
        gap: Option<f64>,
        /// Solve time limit in seconds; overrides the config.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Plan against a scenario file from `generate` instead of regenerating.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Decode a "name value" solution file from an external solver
        /// instead of solving (pair with `export-mps`).
        #[arg(long)]
        from_solution: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full budget-sweep experiment from a config file.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for results.* and aggregates.*.
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
    },
    /// Re-check a plan file arithmetically against its instance.
    Check {
        /// Plan JSON file produced by `plan`.
        plan_file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Budget the plan was produced under.
        #[arg(long)]
        budget: f64,
        /// Scenario file the plan was produced against, if not regenerable
        /// from the config and seed.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the model as an MPS file for an external solver.
    ExportMps {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: f64,
        #[arg(long, default_value = "mtf")]
        formulation: SweepFormulation,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force the exact optimum of a tiny instance (at most 6 sites
    /// and 4 test points).
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: f64,
        /// mtf or ptf.
        #[arg(long, default_value = "mtf")]
        formulation: SweepFormulation,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult<T> = Result<T, Box<dyn Error>>;

fn load_config(path: Option<&Path>) -> CliResult<HarnessConfig> {
    Ok(match path {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    })
}

fn load_or_generate(
    cfg: &HarnessConfig,
    seed: Option<u64>,
    scenario: Option<&Path>,
) -> CliResult<Scenario> {
    match scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            let s: Scenario =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
            s.validate()?;
            Ok(s)
        }
        None => {
            let mut gen = cfg.generation.clone();
            if let Some(s) = seed {
                gen.seed = s;
            }
            Ok(generate_instance(&gen)?)
        }
    }
}

fn make_input(cfg: &HarnessConfig, scenario: Scenario, budget: f64) -> CliResult<PlanningInput> {
    let links = build_link_parameters(&scenario, &cfg.radio_config())?;
    let input = PlanningInput {
        scenario,
        link_params: links,
        budget,
        demand_mbps: cfg.prices.demand_mbps,
        price_iab: cfg.prices.iab,
        price_ris: cfg.prices.ris,
    };
    input.validate()?;
    Ok(input)
}

fn build_model(
    input: &PlanningInput,
    form: SweepFormulation,
    heuristic_fraction: f64,
) -> Result<(Model, VarMap), PlannerError> {
    match form {
        SweepFormulation::Mtf => build_mtf(input),
        SweepFormulation::Ptf => build_ptf(input),
        SweepFormulation::PtfHeur => build_ptf(input).map(|(m, vm)| {
            let restricted = apply_forced_bottleneck(&m, &vm, heuristic_fraction);
            (restricted, vm)
        }),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", p.display()))?;
                }
            }
            std::fs::write(p, format!("{text}\n")).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn status_str(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::GapReached => "gap",
        Status::Infeasible => "infeasible",
        Status::Unbounded => "unbounded",
        Status::Limit => "limit",
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_or_generate(&cfg, seed, None)?;
            eprintln!(
                "instance seed {}: {} sites (donor + {} candidates + direct-path), {} test points, {} obstacles",
                scenario.seed,
                scenario.sites.len(),
                scenario.sites.len() - 2,
                scenario.test_points.len(),
                scenario.obstacles.len()
            );
            let text = serde_json::to_string_pretty(&scenario)?;
            write_or_print(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Plan {
            config,
            seed,
            budget,
            formulation,
            gap,
            time_limit,
            scenario,
            from_solution,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_or_generate(&cfg, seed, scenario.as_deref())?;
            let input = make_input(&cfg, scenario, budget)?;
            let (model, varmap) = build_model(&input, formulation, cfg.solver.heuristic_fraction)?;
            let sol = match &from_solution {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    let values = import_solution(&model, &text)?;
                    let objective = model.objective.value(&values);
                    Solution {
                        status: Status::Optimal,
                        values,
                        objective,
                        best_bound: objective,
                        gap: 0.0,
                        stats: Default::default(),
                    }
                }
                None => {
                    let opts = SolveOptions {
                        gap_target: gap.unwrap_or(cfg.solver.gap_target),
                        time_limit: time_limit
                            .or(cfg.solver.time_limit_s)
                            .map(std::time::Duration::from_secs_f64),
                        node_limit: cfg.solver.node_limit,
                    };
                    solve_branch_and_bound(&model, &opts)?
                }
            };
            if matches!(sol.status, Status::Infeasible | Status::Unbounded) || !sol.has_values() {
                return Err(format!(
                    "no plan: solver finished with status {}",
                    status_str(sol.status)
                )
                .into());
            }
            let plan = decode(&sol, &varmap, &input)?;
            let report = check_feasibility(&plan, &input);
            let (iab, ris) = plan.device_counts(&input.scenario);
            eprintln!(
                "status {} | objective {:.3} | bound {:.3} | gap {:.4} | {} IAB + {} RIS",
                status_str(sol.status),
                plan.objective,
                plan.best_bound,
                plan.gap,
                iab,
                ris
            );
            eprintln!(
                "{} nodes | {} simplex iterations | {:.0} ms",
                sol.stats.nodes, sol.stats.simplex_iterations, sol.stats.wall_ms
            );
            match (evaluate_mean(&plan, &input), evaluate_peak(&plan, &input)) {
                (Ok(mean), Ok(peak)) => {
                    eprintln!("mean throughput {mean:.3} Mb/s | peak throughput {peak:.3} Mb/s")
                }
                (m, p) => eprintln!(
                    "cross-evaluation failed: {}",
                    m.err().or(p.err()).expect("one side failed")
                ),
            }
            if !report.pass {
                let bad: Vec<&str> =
                    report.families.iter().filter(|f| !f.pass).map(|f| f.family.as_str()).collect();
                eprintln!("feasibility check FAILED: {}", bad.join(", "));
            }
            write_or_print(out.as_deref(), &plan.to_json())?;
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }

        Command::Sweep { config, out, format } => {
            let cfg = load_config(config.as_deref())?;
            let output = run_sweep(&cfg)?;
            let ext = match format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            };
            let results_path = out.join(format!("results.{ext}"));
            let aggregates_path = out.join(format!("aggregates.{ext}"));
            emit_results(&output.results, format, &results_path)?;
            emit_aggregates(&output.aggregates, format, &aggregates_path)?;
            let ok = output.results.iter().filter(|r| r.counts_for_aggregates()).count();
            eprintln!(
                "{} cells ({} usable) -> {} and {}",
                output.results.len(),
                ok,
                results_path.display(),
                aggregates_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Check { plan_file, config, seed, budget, scenario, out } => {
            let cfg = load_config(config.as_deref())?;
            let text = std::fs::read_to_string(&plan_file)
                .map_err(|e| format!("{}: {e}", plan_file.display()))?;
            let plan = ranplan::planners::Plan::from_json(&text)?;
            let scenario = load_or_generate(&cfg, seed, scenario.as_deref())?;
            let input = make_input(&cfg, scenario, budget)?;
            let report = check_feasibility(&plan, &input);
            write_or_print(out.as_deref(), &report.to_json())?;
            if report.pass {
                eprintln!("all {} constraint families pass", report.families.len());
                Ok(ExitCode::SUCCESS)
            } else {
                let bad: Vec<&str> =
                    report.families.iter().filter(|f| !f.pass).map(|f| f.family.as_str()).collect();
                eprintln!("FAILED families: {}", bad.join(", "));
                Ok(ExitCode::from(2))
            }
        }

        Command::ExportMps { config, seed, budget, formulation, scenario, out } => {
            let cfg = load_config(config.as_deref())?;
            let scenario = load_or_generate(&cfg, seed, scenario.as_deref())?;
            let input = make_input(&cfg, scenario, budget)?;
            let (model, varmap) = build_model(&input, formulation, cfg.solver.heuristic_fraction)?;
            eprintln!(
                "{} model: {} variables, {} constraints",
                formulation,
                varmap.total_vars(),
                model.constraints.len()
            );
            match out.as_deref() {
                Some(p) => export_mps(&model, p).map_err(|e| format!("{}: {e}", p.display()))?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    ranplan::milp::write_mps(&model, &mut stdout)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Oracle { config, seed, budget, formulation, scenario } => {
            let form = match formulation {
                SweepFormulation::Mtf => Formulation::Mtf,
                SweepFormulation::Ptf => Formulation::Ptf,
                SweepFormulation::PtfHeur => {
                    return Err("the oracle solves exact formulations only: mtf or ptf".into())
                }
            };
            let cfg = load_config(config.as_deref())?;
            let scenario = load_or_generate(&cfg, seed, scenario.as_deref())?;
            let input = make_input(&cfg, scenario, budget)?;
            let objective = brute_force_oracle(&input, form)?;
            println!(
                "{}",
                serde_json::json!({
                    "formulation": form.to_string(),
                    "budget": budget,
                    "objective": objective,
                })
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
