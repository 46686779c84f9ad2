//! Exact solution of small models by enumeration, and an out-of-process
//! shim for external MIP solvers.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};

use super::{export_model, MipModel, Sense, VarKind};
use crate::error::{Error, Result};
use crate::qp::{solve_qp, QpProblem, QpStatus, QpTolerances};

/// Path of the external solver executable.
pub const SOLVER_ENV: &str = "UPHES_MIP_SOLVER";
/// Whitespace-separated argument template with `{model}` and `{solution}` placeholders.
pub const SOLVER_ARGS_ENV: &str = "UPHES_MIP_SOLVER_ARGS";

#[derive(Debug, Clone, PartialEq)]
pub struct MipSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Continuous subproblems solved.
    pub explored: usize,
    /// Subproblems with a feasible optimum.
    pub feasible: usize,
    /// Largest bound, row, integrality or SOS2 violation of `values`.
    pub violation: f64,
}

impl MipSolution {
    fn new(model: &MipModel, values: Vec<f64>, explored: usize, feasible: usize) -> Self {
        let objective = model.objective_value(&values);
        let violation = model.max_violation(&values);
        MipSolution { values, objective, explored, feasible, violation }
    }

    /// Net power `p_T + p_P` per hour.
    pub fn schedule(&self, model: &MipModel) -> Result<Vec<f64>> {
        let idx = model.name_index();
        (0..model.meta.horizon)
            .map(|t| {
                let get = |n: String| idx.get(n.as_str()).map(|&j| self.values[j]).ok_or_else(|| Error::InvalidArgument(format!("no variable {n}")));
                Ok(get(format!("pT_{t}"))? + get(format!("pP_{t}"))?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumLimits {
    /// Largest number of continuous subproblems.
    pub max_subproblems: usize,
    pub max_binaries: usize,
    pub tol: QpTolerances,
}

impl Default for EnumLimits {
    fn default() -> Self {
        EnumLimits { max_subproblems: 1 << 18, max_binaries: 24, tol: QpTolerances::default() }
    }
}

fn tol_of(x: f64) -> f64 {
    1e-9 * (1.0 + x.abs())
}

/// Bound propagation over the rows. `None` when infeasibility is detected.
fn presolve(m: &MipModel, mut lo: Vec<f64>, mut hi: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    for _ in 0..100 {
        let mut changed = false;
        for r in &m.rows {
            let (mut fixed, mut min_act, mut max_act) = (0.0, 0.0, 0.0);
            let mut free = Vec::new();
            for &(j, a) in &r.coeffs {
                if hi[j] - lo[j] <= tol_of(lo[j]) {
                    fixed += a * lo[j];
                } else {
                    free.push((j, a));
                    min_act += if a > 0.0 { a * lo[j] } else { a * hi[j] };
                    max_act += if a > 0.0 { a * hi[j] } else { a * lo[j] };
                }
            }
            let rhs = r.rhs - fixed;
            let tol = tol_of(r.rhs) + tol_of(fixed);
            let (need_le, need_ge) = (r.sense != Sense::Ge, r.sense != Sense::Le);
            if (need_le && min_act > rhs + tol) || (need_ge && max_act < rhs - tol) {
                return None;
            }
            if free.is_empty() {
                continue;
            }
            if free.len() == 1 {
                let (j, a) = free[0];
                let b = rhs / a;
                let (upper, lower) = match (r.sense, a > 0.0) {
                    (Sense::Eq, _) => (true, true),
                    (Sense::Le, true) | (Sense::Ge, false) => (true, false),
                    _ => (false, true),
                };
                if upper && b < hi[j] - tol_of(b) {
                    hi[j] = b;
                    changed = true;
                }
                if lower && b > lo[j] + tol_of(b) {
                    lo[j] = b;
                    changed = true;
                }
            } else {
                let at_min = need_le && min_act >= rhs - tol;
                let at_max = need_ge && max_act <= rhs + tol;
                if at_min || at_max {
                    for &(j, a) in &free {
                        let v = if (a > 0.0) == at_min { lo[j] } else { hi[j] };
                        if !v.is_finite() {
                            continue;
                        }
                        (lo[j], hi[j]) = (v, v);
                    }
                    changed = true;
                }
            }
        }
        for j in 0..lo.len() {
            if lo[j] > hi[j] + tol_of(hi[j]) {
                return None;
            }
            if lo[j] > hi[j] {
                hi[j] = lo[j];
            }
        }
        if !changed {
            break;
        }
    }
    Some((lo, hi))
}

/// Continuous optimum with the given bounds. `Ok(None)` when infeasible.
fn solve_continuous(m: &MipModel, lo: &[f64], hi: &[f64], tol: &QpTolerances) -> Result<Option<Vec<f64>>> {
    let n = m.n_vars();
    let is_free: Vec<bool> = (0..n).map(|j| hi[j] - lo[j] > tol_of(lo[j])).collect();
    let free: Vec<usize> = (0..n).filter(|&j| is_free[j]).collect();
    let mut col = vec![usize::MAX; n];
    for (k, &j) in free.iter().enumerate() {
        col[j] = k;
    }
    let mut x: Vec<f64> = lo.to_vec();
    if free.is_empty() {
        return Ok(Some(x));
    }
    let nf = free.len();
    let mut p = DMatrix::zeros(nf, nf);
    let mut q = DVector::from_fn(nf, |k, _| m.objective[free[k]]);
    for &(i, j, v) in &m.quadratic {
        match (is_free[i], is_free[j]) {
            (true, true) if i == j => p[(col[i], col[i])] += v,
            (true, true) => {
                p[(col[i], col[j])] += v;
                p[(col[j], col[i])] += v;
            }
            (true, false) => q[col[i]] += v * x[j],
            (false, true) => q[col[j]] += v * x[i],
            _ => {}
        }
    }
    // rows keyed by coefficient pattern so opposite inequalities merge into ranges
    type Key = Vec<(usize, u64)>;
    type Terms = Vec<(usize, f64)>;
    let mut keys: HashMap<Key, usize> = HashMap::new();
    let mut ranges: Vec<(Terms, f64, f64)> = Vec::new();
    for r in &m.rows {
        let mut terms: Vec<(usize, f64)> = Vec::new();
        let mut rhs = r.rhs;
        for &(j, a) in &r.coeffs {
            if is_free[j] {
                terms.push((col[j], a));
            } else {
                rhs -= a * x[j];
            }
        }
        if terms.is_empty() || (terms.len() == 1 && r.sense != Sense::Eq) {
            continue;
        }
        let s = if terms[0].1 < 0.0 { -1.0 } else { 1.0 };
        let (mut l, mut u) = match r.sense {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
            Sense::Eq => (rhs, rhs),
        };
        if s < 0.0 {
            (l, u) = (-u, -l);
            terms.iter_mut().for_each(|t| t.1 = -t.1);
        }
        let key: Key = terms.iter().map(|&(k, a)| (k, a.to_bits())).collect();
        match keys.get(&key) {
            Some(&i) => {
                ranges[i].1 = ranges[i].1.max(l);
                ranges[i].2 = ranges[i].2.min(u);
            }
            None => {
                keys.insert(key, ranges.len());
                ranges.push((terms, l, u));
            }
        }
    }
    let mut eq: Vec<(&Terms, f64)> = vec![];
    let mut ineq: Vec<(&Terms, f64, f64)> = vec![];
    for (terms, l, u) in &ranges {
        let bounded = l.is_finite() && u.is_finite();
        let tol = if bounded { tol_of(*l) + tol_of(*u) } else { 0.0 };
        if l > &(u + tol) {
            return Ok(None);
        }
        if bounded && u - l <= tol {
            eq.push((terms, 0.5 * (l + u)));
        } else {
            if l.is_finite() {
                ineq.push((terms, -1.0, -l));
            }
            if u.is_finite() {
                ineq.push((terms, 1.0, *u));
            }
        }
    }
    let n_g = ineq.len() + free.iter().filter(|&&j| lo[j].is_finite()).count() + free.iter().filter(|&&j| hi[j].is_finite()).count();
    let mut a = DMatrix::zeros(eq.len(), nf);
    let mut b = DVector::zeros(eq.len());
    for (k, (terms, rhs)) in eq.iter().enumerate() {
        for &(c, v) in terms.iter() {
            a[(k, c)] = v;
        }
        b[k] = *rhs;
    }
    let mut g = DMatrix::zeros(n_g, nf);
    let mut h = DVector::zeros(n_g);
    let mut k = 0;
    for (terms, s, rhs) in &ineq {
        for &(c, v) in terms.iter() {
            g[(k, c)] = s * v;
        }
        h[k] = *rhs;
        k += 1;
    }
    for (c, &j) in free.iter().enumerate() {
        if lo[j].is_finite() {
            g[(k, c)] = -1.0;
            h[k] = -lo[j];
            k += 1;
        }
        if hi[j].is_finite() {
            g[(k, c)] = 1.0;
            h[k] = hi[j];
            k += 1;
        }
    }
    let sol = solve_qp(&QpProblem { p, q, a, b, g, h }, tol)?;
    match sol.status {
        QpStatus::Optimal => {
            for (c, &j) in free.iter().enumerate() {
                x[j] = sol.x[c].clamp(lo[j], hi[j]);
            }
            Ok(Some(x))
        }
        QpStatus::Infeasible => Ok(None),
        QpStatus::MaxIterations => Err(Error::Numerical("continuous subproblem did not converge".into())),
    }
}

/// Global optimum by enumerating binary assignments and SOS2 segments,
/// solving the convex continuous problem left by each. Ties keep the first
/// assignment in lexicographic order with binaries at 0 first.
pub fn solve_enumerated(m: &MipModel, limits: &EnumLimits) -> Result<MipSolution> {
    m.validate()?;
    if m.quadratic.iter().any(|&(i, j, q)| i == j && q < 0.0) {
        return Err(Error::InvalidArgument("objective is not convex".into()));
    }
    let bins: Vec<usize> = (0..m.n_vars()).filter(|&j| m.vars[j].kind == VarKind::Binary).collect();
    if bins.len() > limits.max_binaries {
        return Err(Error::Solver(format!("{} binaries exceed the enumeration limit of {}; set {SOLVER_ENV} to use an external solver", bins.len(), limits.max_binaries)));
    }
    let lo0: Vec<f64> = m.vars.iter().map(|v| v.lower).collect();
    let hi0: Vec<f64> = m.vars.iter().map(|v| v.upper).collect();
    let (mut explored, mut feasible) = (0usize, 0usize);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let nb = bins.len();
    for mask in 0u64..(1u64 << nb) {
        let (mut lo, mut hi) = (lo0.clone(), hi0.clone());
        for (k, &j) in bins.iter().enumerate() {
            let v = ((mask >> (nb - 1 - k)) & 1) as f64;
            if v < lo[j] || v > hi[j] {
                continue;
            }
            (lo[j], hi[j]) = (v, v);
        }
        if bins.iter().any(|&j| lo[j] != hi[j]) {
            continue;
        }
        let Some((lo, hi)) = presolve(m, lo, hi) else { continue };
        let active: Vec<&super::Sos2Group> = m.sos2.iter().filter(|g| g.vars.iter().any(|&j| hi[j] > 0.0)).collect();
        let mut seg = vec![0usize; active.len()];
        let mut done = false;
        while !done {
            let (mut l, mut h) = (lo.clone(), hi.clone());
            for (g, &s) in active.iter().zip(&seg) {
                for (k, &j) in g.vars.iter().enumerate() {
                    if k != s && k != s + 1 {
                        (l[j], h[j]) = (l[j].min(0.0), h[j].min(0.0));
                    }
                }
            }
            if let Some((l, h)) = presolve(m, l, h) {
                explored += 1;
                if explored > limits.max_subproblems {
                    return Err(Error::Solver(format!("more than {} subproblems to enumerate; set {SOLVER_ENV} to use an external solver", limits.max_subproblems)));
                }
                if let Some(x) = solve_continuous(m, &l, &h, &limits.tol)? {
                    feasible += 1;
                    let f = m.objective_value(&x);
                    if best.as_ref().is_none_or(|b| f < b.0) {
                        best = Some((f, x));
                    }
                }
            }
            // odometer over segment choices, last group fastest
            done = true;
            for k in (0..active.len()).rev() {
                seg[k] += 1;
                if seg[k] + 1 < active[k].vars.len() {
                    done = false;
                    break;
                }
                seg[k] = 0;
            }
        }
    }
    let (_, x) = best.ok_or_else(|| Error::Numerical("model is infeasible".into()))?;
    Ok(MipSolution::new(m, x, explored, feasible))
}

/// Variable values from a solution file: on each line the first token naming
/// a column is followed by its value; unlisted columns are zero.
pub fn parse_solution(text: &str, m: &MipModel) -> Result<Vec<f64>> {
    let idx = m.name_index();
    let mut x = vec![0.0; m.n_vars()];
    let mut found = 0;
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if let Some(k) = f.iter().position(|t| idx.contains_key(t)) {
            if let Some(v) = f.get(k + 1).and_then(|s| s.parse::<f64>().ok()) {
                x[idx[f[k]]] = v;
                found += 1;
            }
        }
    }
    if found == 0 && m.n_vars() > 0 {
        let head: String = text.lines().take(3).collect::<Vec<_>>().join(" | ");
        return Err(Error::Solver(format!("no variable values in solution file ({head})")));
    }
    Ok(x)
}

/// External solver invoked as `executable args…` with placeholders replaced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverShim {
    pub executable: PathBuf,
    pub args: Vec<String>,
}

impl SolverShim {
    pub fn new(executable: impl Into<PathBuf>, args: Vec<String>) -> Self {
        SolverShim { executable: executable.into(), args }
    }

    /// Shim configured through the environment, if any.
    pub fn from_env() -> Option<Self> {
        let exe = std::env::var_os(SOLVER_ENV).filter(|s| !s.is_empty())?;
        let args = match std::env::var(SOLVER_ARGS_ENV) {
            Ok(s) if !s.trim().is_empty() => s.split_whitespace().map(String::from).collect(),
            _ => vec!["{model}".into(), "{solution}".into()],
        };
        Some(SolverShim::new(exe, args))
    }

    /// Export to `dir/model.mps`, run the solver and read `dir/model.sol`.
    pub fn solve(&self, m: &MipModel, dir: &Path) -> Result<MipSolution> {
        let model_path = dir.join("model.mps");
        let sol_path = dir.join("model.sol");
        export_model(m, &model_path)?;
        let _ = std::fs::remove_file(&sol_path);
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace("{model}", &model_path.display().to_string()).replace("{solution}", &sol_path.display().to_string()))
            .collect();
        let out = Command::new(&self.executable)
            .args(&args)
            .output()
            .map_err(|e| Error::Solver(format!("cannot run {}: {e}", self.executable.display())))?;
        if !out.status.success() {
            return Err(Error::Solver(format!(
                "{} exited with {}: {}",
                self.executable.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(|e| Error::io(&sol_path, e))?;
        Ok(MipSolution::new(m, parse_solution(&text, m)?, 0, 1))
    }
}
