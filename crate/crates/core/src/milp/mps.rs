//! Free-format MPS export and plain "name value" solution import.
//!
//! Output is deterministic for identical models: fixed section order,
//! variables in declaration order, one coefficient per line, shortest
//! round-trip float formatting. Row names get an index prefix so labels
//! never collide; column names must be unique after sanitization.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::{MilpError, Model, Sense, VarKind};

/// MPS names: keep alphanumerics, dot and underscore; everything else
/// becomes an underscore. Empty input maps to a single underscore.
fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

fn column_names(model: &Model) -> Result<Vec<String>, MilpError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::with_capacity(model.vars.len());
    for v in &model.vars {
        let s = sanitize(&v.name);
        if let Some(prev) = seen.insert(s.clone(), v.id) {
            return Err(MilpError::NameCollision(format!(
                "columns {prev} and {} both sanitize to '{s}'",
                v.id
            )));
        }
        names.push(s);
    }
    Ok(names)
}

fn row_name(i: usize, label: &str) -> String {
    format!("R{}_{}", i, sanitize(label))
}

/// Shortest round-trip formatting; integers print without a trailing dot.
fn fmt(v: f64) -> String {
    format!("{}", v)
}

/// Writes the model as free MPS (maximization declared via OBJSENSE).
pub fn write_mps<W: Write>(model: &Model, out: &mut W) -> Result<(), MilpError> {
    model.validate()?;
    let cols = column_names(model)?;

    writeln!(out, "NAME          MODEL")?;
    writeln!(out, "OBJSENSE")?;
    writeln!(out, "    MAX")?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N  OBJ")?;
    let mut rnames = Vec::with_capacity(model.constraints.len());
    for (i, c) in model.constraints.iter().enumerate() {
        let tag = match c.sense {
            Sense::Le => 'L',
            Sense::Ge => 'G',
            Sense::Eq => 'E',
        };
        let rn = row_name(i, &c.label);
        writeln!(out, " {}  {}", tag, rn)?;
        rnames.push(rn);
    }

    // Column-major coefficient lists with integrality markers around
    // binary columns.
    writeln!(out, "COLUMNS")?;
    let mut marker = 0usize;
    let mut in_int = false;
    // Row terms indexed per column once, to avoid rescanning constraints.
    let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.vars.len()];
    for (i, c) in model.constraints.iter().enumerate() {
        for &(j, a) in &c.expr.terms {
            per_col[j].push((i, a));
        }
    }
    for v in &model.vars {
        let want_int = v.kind == VarKind::Binary;
        if want_int != in_int {
            let kind = if want_int { "INTORG" } else { "INTEND" };
            writeln!(out, "    M{}  'MARKER'  '{}'", marker, kind)?;
            marker += 1;
            in_int = want_int;
        }
        let name = &cols[v.id];
        let obj = model.objective.coeff(v.id);
        if obj != 0.0 {
            writeln!(out, "    {}  OBJ  {}", name, fmt(obj))?;
        }
        for &(ri, a) in &per_col[v.id] {
            writeln!(out, "    {}  {}  {}", name, rnames[ri], fmt(a))?;
        }
    }
    if in_int {
        writeln!(out, "    M{}  'MARKER'  'INTEND'", marker)?;
    }

    writeln!(out, "RHS")?;
    // Objective constant follows the usual convention: RHS of the objective
    // row is the negated constant.
    if model.objective.constant != 0.0 {
        writeln!(out, "    RHS  OBJ  {}", fmt(-model.objective.constant))?;
    }
    for (i, c) in model.constraints.iter().enumerate() {
        let rhs = c.rhs - c.expr.constant;
        if rhs != 0.0 {
            writeln!(out, "    RHS  {}  {}", rnames[i], fmt(rhs))?;
        }
    }

    writeln!(out, "BOUNDS")?;
    for v in &model.vars {
        let name = &cols[v.id];
        match v.kind {
            VarKind::Binary => {
                writeln!(out, " BV BND  {}", name)?;
            }
            VarKind::Continuous => {
                let (lo, hi) = (v.lower, v.upper);
                if lo == hi {
                    writeln!(out, " FX BND  {}  {}", name, fmt(lo))?;
                    continue;
                }
                if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                    writeln!(out, " FR BND  {}", name)?;
                    continue;
                }
                if lo == f64::NEG_INFINITY {
                    writeln!(out, " MI BND  {}", name)?;
                } else if lo != 0.0 {
                    writeln!(out, " LO BND  {}  {}", name, fmt(lo))?;
                }
                if hi != f64::INFINITY {
                    writeln!(out, " UP BND  {}  {}", name, fmt(hi))?;
                }
            }
        }
    }
    writeln!(out, "ENDATA")?;
    Ok(())
}

/// Writes the model to a file path.
pub fn export_mps(model: &Model, path: impl AsRef<Path>) -> Result<(), MilpError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_mps(model, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Parses whitespace-separated "name value" lines from an external solver
/// into a full assignment in model variable order. Names are matched after
/// the same sanitization used by the exporter; absent variables default to
/// zero; unknown names are an error. Lines starting with '#' are skipped.
pub fn import_solution(model: &Model, text: &str) -> Result<Vec<f64>, MilpError> {
    let cols = column_names(model)?;
    let index: HashMap<&str, usize> =
        cols.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut values = vec![0.0; model.vars.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(val)) = (parts.next(), parts.next()) else {
            return Err(MilpError::SolutionImport(format!(
                "line {}: expected 'name value', got '{line}'",
                lineno + 1
            )));
        };
        if parts.next().is_some() {
            return Err(MilpError::SolutionImport(format!(
                "line {}: trailing tokens after 'name value'",
                lineno + 1
            )));
        }
        let Some(&id) = index.get(name) else {
            return Err(MilpError::SolutionImport(format!(
                "line {}: unknown variable '{name}'",
                lineno + 1
            )));
        };
        let v: f64 = val.parse().map_err(|_| {
            MilpError::SolutionImport(format!("line {}: bad number '{val}'", lineno + 1))
        })?;
        values[id] = v;
    }
    Ok(values)
}
