//! Free-form MPS with `SOS` and `QMATRIX` sections.
//!
//! SOS sets use the `S2 name` header followed by `column weight` lines; the
//! `S2 SOS name priority` header with `column:weight` lines is also read.
//!
//! Every bound is written explicitly, binaries sit between integer markers
//! with a `BV` bound, and `QMATRIX` lists the full symmetric matrix of the
//! `½xᵀQx` term. A leading comment carries the model metadata.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use super::{Formulation, MipMeta, MipModel, Row, Sense, Sos2Group, VarKind, Variable};
use crate::error::{Error, Result};

const OBJ: &str = "obj";
const META: &str = "* uphes";

/// Shortest decimal that parses back to the same value.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn write_model(m: &MipModel, out: &mut impl Write) -> std::io::Result<()> {
    let grid: Vec<String> = m.meta.grid.iter().map(usize::to_string).collect();
    writeln!(out, "{META} formulation={} horizon={} grid={}", m.meta.formulation.name(), m.meta.horizon, grid.join(","))?;
    writeln!(out, "NAME {}", m.name)?;
    writeln!(out, "ROWS")?;
    writeln!(out, " N {OBJ}")?;
    for r in &m.rows {
        let s = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        writeln!(out, " {s} {}", r.name)?;
    }
    writeln!(out, "COLUMNS")?;
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m.vars.len()];
    for (k, r) in m.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            by_col[j].push((k, a));
        }
    }
    let mut in_int = false;
    let mut markers = 0;
    for (j, v) in m.vars.iter().enumerate() {
        let is_int = v.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "INTORG" } else { "INTEND" };
            writeln!(out, " MARKER{markers} 'MARKER' '{tag}'")?;
            markers += usize::from(!is_int);
            in_int = is_int;
        }
        let c = m.objective[j];
        if c != 0.0 || by_col[j].is_empty() {
            writeln!(out, " {} {OBJ} {}", v.name, num(c))?;
        }
        for &(k, a) in &by_col[j] {
            writeln!(out, " {} {} {}", v.name, m.rows[k].name, num(a))?;
        }
    }
    if in_int {
        writeln!(out, " MARKER{markers} 'MARKER' 'INTEND'")?;
    }
    if m.rows.iter().any(|r| r.rhs != 0.0) {
        writeln!(out, "RHS")?;
        for r in m.rows.iter().filter(|r| r.rhs != 0.0) {
            writeln!(out, " rhs {} {}", r.name, num(r.rhs))?;
        }
    }
    if !m.vars.is_empty() {
        writeln!(out, "BOUNDS")?;
        for v in &m.vars {
            if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
                writeln!(out, " BV bnd {}", v.name)?;
            } else if v.lower == v.upper {
                writeln!(out, " FX bnd {} {}", v.name, num(v.lower))?;
            } else if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
                writeln!(out, " FR bnd {}", v.name)?;
            } else {
                match v.lower {
                    f64::NEG_INFINITY => writeln!(out, " MI bnd {}", v.name)?,
                    lo => writeln!(out, " LO bnd {} {}", v.name, num(lo))?,
                }
                match v.upper {
                    f64::INFINITY => writeln!(out, " PL bnd {}", v.name)?,
                    hi => writeln!(out, " UP bnd {} {}", v.name, num(hi))?,
                }
            }
        }
    }
    if !m.sos2.is_empty() {
        writeln!(out, "SOS")?;
        for g in &m.sos2 {
            writeln!(out, " S2 {}", g.name)?;
            for (k, &j) in g.vars.iter().enumerate() {
                writeln!(out, "    {} {}", m.vars[j].name, k + 1)?;
            }
        }
    }
    if !m.quadratic.is_empty() {
        writeln!(out, "QMATRIX")?;
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * m.quadratic.len());
        for &(i, j, q) in &m.quadratic {
            full.push((i, j, q));
            if i != j {
                full.push((j, i, q));
            }
        }
        full.sort_by_key(|e| (e.0, e.1));
        for (i, j, q) in full {
            writeln!(out, " {} {} {}", m.vars[i].name, m.vars[j].name, num(q))?;
        }
    }
    writeln!(out, "ENDATA")
}

/// Validate and write `m`; output is byte-identical for identical models.
pub fn export_model(m: &MipModel, path: &Path) -> Result<()> {
    m.validate()?;
    let mut buf = Vec::new();
    write_model(m, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Sos,
    Qmatrix,
}

fn parse_meta(line: &str) -> Option<MipMeta> {
    let mut meta = MipMeta { formulation: Formulation::Gl, horizon: 0, grid: vec![] };
    for field in line.strip_prefix(META)?.split_whitespace() {
        let (k, v) = field.split_once('=')?;
        match k {
            "formulation" => meta.formulation = v.parse().ok()?,
            "horizon" => meta.horizon = v.parse().ok()?,
            "grid" if !v.is_empty() => meta.grid = v.split(',').map(|s| s.parse().ok()).collect::<Option<Vec<_>>>()?,
            _ => {}
        }
    }
    Some(meta)
}

/// Parse a free-form MPS file as written by [`export_model`].
pub fn read_model(path: &Path) -> Result<MipModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}

pub fn parse_model(text: &str, source: &str) -> Result<MipModel> {
    let err = |line: usize, msg: String| Error::Parse { path: source.into(), line, msg };
    let mut m = MipModel::empty("", MipMeta { formulation: Formulation::Gl, horizon: 0, grid: vec![] });
    let mut section = Section::None;
    let mut row_idx: HashMap<String, usize> = HashMap::new();
    let mut var_idx: HashMap<String, usize> = HashMap::new();
    let mut int_vars = vec![];
    let mut in_int = false;
    let mut ended = false;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        if raw.starts_with('*') {
            if let Some(meta) = parse_meta(raw) {
                m.meta = meta;
            } else if raw.starts_with(META) {
                return Err(err(ln, "malformed metadata comment".into()));
            }
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if !raw.starts_with(char::is_whitespace) {
            section = match f[0] {
                "NAME" => {
                    m.name = f.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "SOS" => Section::Sos,
                "QMATRIX" => Section::Qmatrix,
                "ENDATA" => {
                    ended = true;
                    break;
                }
                s => return Err(err(ln, format!("unknown section {s}"))),
            };
            continue;
        }
        let value = |s: &str| s.parse::<f64>().map_err(|_| err(ln, format!("invalid number {s:?}")));
        let var = |name: &str| var_idx.get(name).copied().ok_or_else(|| err(ln, format!("unknown column {name}")));
        match section {
            Section::Rows => {
                let [kind, name] = f[..] else { return Err(err(ln, "expected row type and name".into())) };
                let sense = match kind {
                    "N" => continue,
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    k => return Err(err(ln, format!("unknown row type {k}"))),
                };
                row_idx.insert(name.into(), m.rows.len());
                m.rows.push(Row { name: name.into(), coeffs: vec![], sense, rhs: 0.0 });
            }
            Section::Columns => {
                if f.get(1) == Some(&"'MARKER'") {
                    match f.get(2) {
                        Some(&"'INTORG'") => in_int = true,
                        Some(&"'INTEND'") => in_int = false,
                        _ => return Err(err(ln, "unknown marker".into())),
                    }
                    continue;
                }
                if f.len() < 3 || f.len().is_multiple_of(2) {
                    return Err(err(ln, "expected column name and (row, value) pairs".into()));
                }
                let j = match var_idx.get(f[0]) {
                    Some(&j) if j + 1 == m.vars.len() => j,
                    Some(_) => return Err(err(ln, format!("column {} is not contiguous", f[0]))),
                    None => {
                        var_idx.insert(f[0].into(), m.vars.len());
                        m.vars.push(Variable { name: f[0].into(), kind: VarKind::Continuous, lower: 0.0, upper: f64::INFINITY });
                        m.objective.push(0.0);
                        int_vars.push(in_int);
                        m.vars.len() - 1
                    }
                };
                for pair in f[1..].chunks(2) {
                    let a = value(pair[1])?;
                    if pair[0] == OBJ {
                        m.objective[j] += a;
                    } else {
                        let k = *row_idx.get(pair[0]).ok_or_else(|| err(ln, format!("unknown row {}", pair[0])))?;
                        if a != 0.0 {
                            m.rows[k].coeffs.push((j, a));
                        }
                    }
                }
            }
            Section::Rhs => {
                if f.len() < 3 || f.len().is_multiple_of(2) {
                    return Err(err(ln, "expected set name and (row, value) pairs".into()));
                }
                for pair in f[1..].chunks(2) {
                    if pair[0] == OBJ {
                        return Err(err(ln, "objective constants are not supported".into()));
                    }
                    let k = *row_idx.get(pair[0]).ok_or_else(|| err(ln, format!("unknown row {}", pair[0])))?;
                    m.rows[k].rhs = value(pair[1])?;
                }
            }
            Section::Bounds => {
                if f.len() < 3 {
                    return Err(err(ln, "expected bound type, set and column".into()));
                }
                let j = var(f[2])?;
                let arg = || f.get(3).map(|s| value(s)).unwrap_or_else(|| Err(err(ln, "missing bound value".into())));
                let v = &mut m.vars[j];
                match f[0] {
                    "LO" => v.lower = arg()?,
                    "UP" => v.upper = arg()?,
                    "FX" => {
                        let x = arg()?;
                        (v.lower, v.upper) = (x, x);
                    }
                    "FR" => (v.lower, v.upper) = (f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => (v.lower, v.upper) = (0.0, 1.0),
                    b => return Err(err(ln, format!("unsupported bound type {b}"))),
                }
            }
            Section::Sos => {
                if matches!(f[0], "S1" | "S2") {
                    if f[0] != "S2" {
                        return Err(err(ln, format!("only S2 sets are supported, got {}", f[0])));
                    }
                    // "S2 name" or "S2 SOS name priority"
                    let name = if f.len() == 4 && f[1] == "SOS" { f[2] } else { f.get(1).copied().unwrap_or("") };
                    m.sos2.push(Sos2Group { name: name.into(), vars: vec![] });
                } else {
                    let name = match f[0].split_once(':') {
                        Some((name, _)) => name,
                        None if f.len() == 2 => f[0],
                        None => return Err(err(ln, "expected a set member and its weight".into())),
                    };
                    let j = var(name)?;
                    m.sos2.last_mut().ok_or_else(|| err(ln, "set member before set header".into()))?.vars.push(j);
                    m.vars[j].kind = VarKind::Sos2Weight;
                }
            }
            Section::Qmatrix => {
                let [a, b, q] = f[..] else { return Err(err(ln, "expected two columns and a value".into())) };
                let (i, j) = (var(a)?, var(b)?);
                if i <= j {
                    m.quadratic.push((i, j, value(q)?));
                }
            }
            Section::None => return Err(err(ln, "data outside a section".into())),
        }
    }
    if !ended {
        return Err(err(text.lines().count(), "missing ENDATA".into()));
    }
    for (v, &int) in m.vars.iter_mut().zip(&int_vars) {
        if int {
            if v.lower != 0.0 || v.upper != 1.0 {
                return Err(Error::Validation(format!("integer column {} is not binary", v.name)));
            }
            v.kind = VarKind::Binary;
        }
    }
    m.quadratic.sort_by_key(|e| (e.0, e.1));
    m.validate()?;
    Ok(m)
}
