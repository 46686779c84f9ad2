//! Mixed-integer baseline models, their MPS encoding and solvers.

pub mod build;
pub mod mps;
pub mod solve;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{big_m_floor, build_miqp_gl, build_miqp_pw};
pub use mps::{export_model, read_model, write_model};
pub use solve::{parse_solution, solve_enumerated, EnumLimits, MipSolution, SolverShim, SOLVER_ARGS_ENV, SOLVER_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
    /// Continuous weight in `[0, 1]` belonging to an SOS2 group.
    Sos2Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    /// Nonzero coefficients sorted by variable index.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let r = self.activity(x) - self.rhs;
        match self.sense {
            Sense::Le => r.max(0.0),
            Sense::Ge => (-r).max(0.0),
            Sense::Eq => r.abs(),
        }
    }
}

/// At most two adjacent members may be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos2Group {
    pub name: String,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Gl,
    Pw,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Gl => "gl",
            Formulation::Pw => "pw",
        }
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gl" => Ok(Formulation::Gl),
            "pw" => Ok(Formulation::Pw),
            _ => Err(Error::InvalidArgument(format!("unknown formulation {s:?}, expected gl or pw"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipMeta {
    pub formulation: Formulation,
    pub horizon: usize,
    /// `[N_h, N_p^T, N_p^P]` for the piecewise model, empty otherwise.
    pub grid: Vec<usize>,
}

/// `min cᵀx + ½xᵀQx` over linear rows, bounds, integrality and SOS2 groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub objective: Vec<f64>,
    /// Upper-triangle entries `(i, j, Q_ij)` with `i ≤ j`, sorted.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub rows: Vec<Row>,
    pub sos2: Vec<Sos2Group>,
    pub meta: MipMeta,
}

impl MipModel {
    pub fn empty(name: &str, meta: MipMeta) -> Self {
        MipModel { name: name.into(), vars: vec![], objective: vec![], quadratic: vec![], rows: vec![], sos2: vec![], meta }
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.vars.iter().filter(|v| v.kind == kind).count()
    }

    pub fn name_index(&self) -> HashMap<&str, usize> {
        self.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars.iter().position(|v| v.name == name).ok_or_else(|| Error::InvalidArgument(format!("no variable {name:?}")))
    }

    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.quadratic.iter().map(|&(i, j, q)| if i == j { 0.5 * q * x[i] * x[i] } else { q * x[i] * x[j] }).sum();
        lin + quad
    }

    /// Largest violation of bounds, rows, integrality and SOS2 adjacency.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max((xi - xi.round()).abs());
            }
        }
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        for g in &self.sos2 {
            let nz: Vec<usize> = (0..g.vars.len()).filter(|&k| x[g.vars[k]].abs() > 1e-9).collect();
            if nz.len() > 2 || (nz.len() == 2 && nz[1] != nz[0] + 1) {
                worst = worst.max(nz.iter().map(|&k| x[g.vars[k]].abs()).fold(0.0, f64::max));
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        let bad = |m: String| Err(Error::Build(m));
        if self.objective.len() != n {
            return bad(format!("{} objective entries for {n} variables", self.objective.len()));
        }
        let mut seen = HashMap::new();
        for (i, v) in self.vars.iter().enumerate() {
            if v.name.is_empty() || v.name.chars().any(char::is_whitespace) {
                return bad(format!("variable name {:?} is empty or has whitespace", v.name));
            }
            if seen.insert(v.name.as_str(), i).is_some() {
                return bad(format!("duplicate variable {}", v.name));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return bad(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper));
            }
            if v.kind != VarKind::Continuous && (v.lower < 0.0 || v.upper > 1.0) {
                return bad(format!("{:?} variable {} outside [0, 1]", v.kind, v.name));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for w in self.quadratic.windows(2) {
            if (w[0].0, w[0].1) >= (w[1].0, w[1].1) {
                return bad("quadratic entries unsorted or duplicated".into());
            }
        }
        if self.quadratic.iter().any(|&(i, j, q)| i > j || j >= n || !q.is_finite()) {
            return bad("quadratic entry outside the upper triangle".into());
        }
        let mut row_names = HashMap::new();
        for r in &self.rows {
            if r.name.is_empty() || r.name.chars().any(char::is_whitespace) || row_names.insert(r.name.as_str(), ()).is_some() {
                return bad(format!("row name {:?} is invalid or duplicated", r.name));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite() || a == 0.0) {
                return bad(format!("row {} has an invalid coefficient", r.name));
            }
            if r.coeffs.windows(2).any(|w| w[0].0 >= w[1].0) {
                return bad(format!("row {} coefficients unsorted", r.name));
            }
        }
        for g in &self.sos2 {
            if g.vars.len() < 2 || g.vars.iter().any(|&j| j >= n || self.vars[j].kind != VarKind::Sos2Weight) {
                return bad(format!("SOS2 group {} must hold at least two weight variables", g.name));
            }
            if g.vars.windows(2).any(|w| w[1] != w[0] + 1) {
                return bad(format!("SOS2 group {} members are not consecutive", g.name));
            }
        }
        Ok(())
    }
}

/// Incremental model construction.
#[derive(Debug)]
pub(crate) struct Builder {
    pub model: MipModel,
}

impl Builder {
    pub fn new(name: &str, meta: MipMeta) -> Self {
        Builder { model: MipModel::empty(name, meta) }
    }

    pub fn var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.model.vars.push(Variable { name, kind, lower, upper });
        self.model.objective.push(0.0);
        self.model.vars.len() - 1
    }

    pub fn row(&mut self, name: String, terms: &[(usize, f64)], sense: Sense, rhs: f64) {
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        let mut sorted = terms.to_vec();
        sorted.sort_by_key(|t| t.0);
        for (j, a) in sorted {
            match coeffs.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => coeffs.push((j, a)),
            }
        }
        coeffs.retain(|c| c.1 != 0.0);
        self.model.rows.push(Row { name, coeffs, sense, rhs });
    }

    pub fn quad(&mut self, i: usize, j: usize, q: f64) {
        let (i, j) = (i.min(j), i.max(j));
        self.model.quadratic.push((i, j, q));
    }

    pub fn finish(mut self) -> Result<MipModel> {
        self.model.quadratic.sort_by_key(|e| (e.0, e.1));
        self.model.validate()?;
        Ok(self.model)
    }
}
