//! Plot-ready output. CSV columns are a stable contract:
//! `instance,budget,formulation,iab_count,ris_count,mean_tput,peak_tput,
//! avg_hops,donor_degree,objective,bound,gap,wall_ms` plus a trailing
//! `status`. Floats use Rust's shortest round-trip formatting and NaN is
//! written as an empty cell, so identical inputs give identical bytes and
//! `parse_results_csv` restores exact values.

use super::{AggregateRow, HarnessError, InstanceResult};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

pub const RESULT_COLUMNS: &str = "instance,budget,formulation,iab_count,ris_count,mean_tput,\
peak_tput,avg_hops,donor_degree,objective,bound,gap,wall_ms,status";

fn float_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_float_cell(s: &str, what: &str) -> Result<f64, HarnessError> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>()
        .map_err(|e| HarnessError::Parse(format!("bad {what} value {s:?}: {e}")))
}

pub fn results_to_csv(results: &[InstanceResult]) -> String {
    let mut out = String::from(RESULT_COLUMNS);
    out.push('\n');
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance,
            float_cell(r.budget),
            r.formulation,
            r.iab_count,
            r.ris_count,
            float_cell(r.mean_tput),
            float_cell(r.peak_tput),
            float_cell(r.avg_hops),
            r.donor_degree,
            float_cell(r.objective),
            float_cell(r.bound),
            float_cell(r.gap),
            r.wall_ms,
            r.status,
        ));
    }
    out
}

/// Inverse of [`results_to_csv`]; used by the round-trip tests and the
/// acceptance checks that audit emitted tables.
pub fn parse_results_csv(text: &str) -> Result<Vec<InstanceResult>, HarnessError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULT_COLUMNS => {}
        other => return Err(HarnessError::Parse(format!("unexpected header {other:?}"))),
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        // The status column is free text but contains no commas by
        // construction; splitn keeps it safe anyway.
        let cells: Vec<&str> = line.splitn(14, ',').collect();
        if cells.len() != 14 {
            return Err(HarnessError::Parse(format!(
                "line {}: expected 14 columns, got {}",
                ln + 2,
                cells.len()
            )));
        }
        let int = |s: &str, what: &str| -> Result<usize, HarnessError> {
            s.parse::<usize>()
                .map_err(|e| HarnessError::Parse(format!("bad {what} value {s:?}: {e}")))
        };
        out.push(InstanceResult {
            instance: int(cells[0], "instance")?,
            budget: parse_float_cell(cells[1], "budget")?,
            formulation: cells[2]
                .parse()
                .map_err(HarnessError::Parse)?,
            iab_count: int(cells[3], "iab_count")?,
            ris_count: int(cells[4], "ris_count")?,
            mean_tput: parse_float_cell(cells[5], "mean_tput")?,
            peak_tput: parse_float_cell(cells[6], "peak_tput")?,
            avg_hops: parse_float_cell(cells[7], "avg_hops")?,
            donor_degree: int(cells[8], "donor_degree")?,
            objective: parse_float_cell(cells[9], "objective")?,
            bound: parse_float_cell(cells[10], "bound")?,
            gap: parse_float_cell(cells[11], "gap")?,
            wall_ms: cells[12]
                .parse::<u64>()
                .map_err(|e| HarnessError::Parse(format!("bad wall_ms {:?}: {e}", cells[12])))?,
            status: cells[13].to_string(),
        });
    }
    Ok(out)
}

pub const AGGREGATE_COLUMNS: &str = "budget,formulation,n,iab_count_mean,iab_count_std,\
ris_count_mean,ris_count_std,mean_tput_mean,mean_tput_std,peak_tput_mean,peak_tput_std,\
avg_hops_mean,avg_hops_std,donor_degree_mean,donor_degree_std";

pub fn aggregates_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_COLUMNS);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            float_cell(r.budget),
            r.formulation,
            r.n,
            float_cell(r.iab_count_mean),
            float_cell(r.iab_count_std),
            float_cell(r.ris_count_mean),
            float_cell(r.ris_count_std),
            float_cell(r.mean_tput_mean),
            float_cell(r.mean_tput_std),
            float_cell(r.peak_tput_mean),
            float_cell(r.peak_tput_std),
            float_cell(r.avg_hops_mean),
            float_cell(r.avg_hops_std),
            float_cell(r.donor_degree_mean),
            float_cell(r.donor_degree_std),
        ));
    }
    out
}

fn write_file(path: &Path, bytes: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(path, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn emit_results(
    results: &[InstanceResult],
    format: OutputFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Parse("refusing to emit an empty result set".into()));
    }
    let bytes = match format {
        OutputFormat::Csv => results_to_csv(results),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(results)
                .map_err(|e| HarnessError::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    write_file(path, &bytes)
}

pub fn emit_aggregates(
    rows: &[AggregateRow],
    format: OutputFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Parse("refusing to emit an empty aggregate set".into()));
    }
    let bytes = match format {
        OutputFormat::Csv => aggregates_to_csv(rows),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows)
                .map_err(|e| HarnessError::Parse(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    write_file(path, &bytes)
}
