//! The mode-locked, trust-region-penalized scheduling QP around an iterate.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::solver::QpProblem;
use crate::approx::{GlobalLinearModel, LocalLinearization};
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant, Role, Trajectory};

/// Hourly trust-region weights on power, flow and head deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    pub w_p: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_h: Vec<f64>,
}

impl PenaltyWeights {
    pub fn uniform(horizon: usize, w: f64) -> Self {
        PenaltyWeights { w_p: vec![w; horizon], w_q: vec![w; horizon], w_h: vec![w; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.w_p.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let f = |v: &Vec<f64>| v.iter().map(|w| w * s).collect();
        PenaltyWeights { w_p: f(&self.w_p), w_q: f(&self.w_q), w_h: f(&self.w_h) }
    }

    /// Flattened as `[w_p, w_q, w_h]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.w_p.iter().chain(&self.w_q).chain(&self.w_h).copied().collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if !v.len().is_multiple_of(3) {
            return Err(Error::InvalidArgument(format!("{} weights is not a multiple of 3", v.len())));
        }
        let t = v.len() / 3;
        Ok(PenaltyWeights { w_p: v[..t].to_vec(), w_q: v[t..2 * t].to_vec(), w_h: v[2 * t..].to_vec() })
    }

    pub fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        let t = self.horizon();
        if self.w_q.len() != t || self.w_h.len() != t {
            return Err(Error::Validation("weight vectors differ in length".into()));
        }
        if let Some(w) = self.to_flat().into_iter().find(|w| !(lo..=hi).contains(w)) {
            return Err(Error::Validation(format!("weight {w} outside [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    P = 0,
    Q = 1,
    H = 2,
    V = 3,
}

/// A built penalized QP with the bookkeeping needed to read and differentiate it.
#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    pub problem: QpProblem,
    pub horizon: usize,
    pub modes: Vec<Mode>,
    /// Expansion point of the linearization and centre of the penalties.
    pub expansion: Trajectory,
    pub weights: PenaltyWeights,
    pub eq_labels: Vec<String>,
    pub ineq_labels: Vec<String>,
    /// Row of the flow link of each hour.
    pub flow_rows: Vec<usize>,
    /// Row of the head link of each hour; hour 0 pins the initial head instead.
    pub head_rows: Vec<usize>,
    /// `Σ w·x̂²`, dropped from the minimization form.
    pub objective_constant: f64,
}

impl QpInstance {
    pub fn var(&self, kind: Var, t: usize) -> usize {
        kind as usize * self.horizon + t
    }

    /// Value of the penalized profit being maximized.
    pub fn penalized_profit(&self, x: &DVector<f64>) -> f64 {
        -(self.problem.objective(x) + self.objective_constant)
    }

    pub fn trajectory(&self, x: &DVector<f64>) -> Trajectory {
        let t = self.horizon;
        let mut traj = Trajectory {
            power: x.rows(0, t).iter().copied().collect(),
            flow: x.rows(t, t).iter().copied().collect(),
            head: x.rows(2 * t, t).iter().copied().collect(),
            volume: x.rows(3 * t, t).iter().copied().collect(),
            mode: self.modes.clone(),
            role: Role::Refined,
        };
        for i in 0..t {
            if !self.modes[i].is_active() {
                traj.power[i] = 0.0;
                traj.flow[i] = 0.0;
            }
        }
        traj
    }

    /// Human-readable listing of the objective and every constraint row.
    pub fn dump(&self) -> String {
        let names: Vec<String> = (0..4 * self.horizon)
            .map(|j| format!("{}{}", ["p", "q", "h", "v"][j / self.horizon], j % self.horizon))
            .collect();
        let row = |m: &DMatrix<f64>, k: usize| {
            let mut s = String::new();
            for j in 0..m.ncols() {
                let c = m[(k, j)];
                if c != 0.0 {
                    let _ = write!(s, " {c:+.9e}*{}", names[j]);
                }
            }
            s
        };
        let p = &self.problem;
        let mut out = String::new();
        let _ = writeln!(out, "minimize 0.5 x'Px + q'x + {:.9e}", self.objective_constant);
        for j in 0..p.n() {
            let _ = writeln!(out, "  P[{0},{0}] = {1:.9e}  q[{0}] = {2:.9e}", names[j], p.p[(j, j)], p.q[j]);
        }
        let _ = writeln!(out, "equalities {}", p.b.len());
        for k in 0..p.b.len() {
            let _ = writeln!(out, "  {}:{} = {:.9e}", self.eq_labels[k], row(&p.a, k), p.b[k]);
        }
        let _ = writeln!(out, "inequalities {}", p.h.len());
        for k in 0..p.h.len() {
            let _ = writeln!(out, "  {}:{} <= {:.9e}", self.ineq_labels[k], row(&p.g, k), p.h[k]);
        }
        out
    }
}

struct Rows {
    coeffs: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    labels: Vec<String>,
}

impl Rows {
    fn new() -> Self {
        Rows { coeffs: Vec::new(), rhs: Vec::new(), labels: Vec::new() }
    }

    fn push(&mut self, label: String, coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.coeffs.push(coeffs);
        self.rhs.push(rhs);
        self.labels.push(label);
        self.rhs.len() - 1
    }

    fn matrices(&self, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut m = DMatrix::zeros(self.rhs.len(), n);
        for (k, row) in self.coeffs.iter().enumerate() {
            for &(j, c) in row {
                m[(k, j)] += c;
            }
        }
        (m, DVector::from_column_slice(&self.rhs))
    }
}

pub fn build_penalized_qp(
    plant: &Plant,
    global: &GlobalLinearModel,
    prices: &[f64],
    xhat: &Trajectory,
    lin: &LocalLinearization,
    weights: &PenaltyWeights,
) -> Result<QpInstance> {
    let t_len = xhat.horizon();
    let lens = [prices.len(), lin.flow.len(), lin.volume.len(), weights.horizon(), weights.w_q.len(), weights.w_h.len()];
    if t_len == 0 || lens.iter().any(|&l| l != t_len) {
        return Err(Error::Build(format!("horizon mismatch: trajectory {t_len}, others {lens:?}")));
    }
    xhat.validate().map_err(|e| Error::Build(e.to_string()))?;
    if lin.modes != xhat.mode {
        return Err(Error::Build("linearization built at a different mode pattern".into()));
    }
    let c = &plant.config;
    let dt_h = c.dt_hours();
    let n = 4 * t_len;
    let ix = |k: Var, t: usize| k as usize * t_len + t;

    let mut p_diag = DVector::zeros(n);
    let mut q_lin = DVector::zeros(n);
    let mut constant = 0.0;
    for t in 0..t_len {
        let (wp, wq, wh) = (weights.w_p[t], weights.w_q[t], weights.w_h[t]);
        let (ph, qh, hh) = (xhat.power[t], xhat.flow[t], xhat.head[t]);
        p_diag[ix(Var::P, t)] = 2.0 * (dt_h * c.c_op + wp);
        q_lin[ix(Var::P, t)] = -dt_h * prices[t] - 2.0 * wp * ph;
        p_diag[ix(Var::Q, t)] = 2.0 * wq;
        q_lin[ix(Var::Q, t)] = -2.0 * wq * qh;
        p_diag[ix(Var::H, t)] = 2.0 * wh;
        q_lin[ix(Var::H, t)] = -2.0 * wh * hh;
        constant += wp * ph * ph + wq * qh * qh + wh * hh * hh;
    }

    let mut eq = Rows::new();
    let mut flow_rows = Vec::with_capacity(t_len);
    let mut head_rows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let xi = lin.flow[t];
        flow_rows.push(eq.push(
            format!("flow[{t}]"),
            vec![(ix(Var::Q, t), 1.0), (ix(Var::P, t), -xi[0]), (ix(Var::H, t), -xi[1])],
            xi[2],
        ));
        if t == 0 {
            eq.push("volume[0]".into(), vec![(ix(Var::V, 0), 1.0), (ix(Var::Q, 0), -c.dt)], c.v_init);
            head_rows.push(eq.push("head[0]".into(), vec![(ix(Var::H, 0), 1.0)], c.h_init));
        } else {
            eq.push(
                format!("volume[{t}]"),
                vec![(ix(Var::V, t), 1.0), (ix(Var::V, t - 1), -1.0), (ix(Var::Q, t), -c.dt)],
                0.0,
            );
            let xv = lin.volume[t];
            head_rows.push(eq.push(format!("head[{t}]"), vec![(ix(Var::V, t - 1), 1.0), (ix(Var::H, t), -xv[0])], xv[1]));
        }
        if !xhat.mode[t].is_active() {
            eq.push(format!("idle[{t}]"), vec![(ix(Var::P, t), 1.0)], 0.0);
        }
    }

    let mut ineq = Rows::new();
    for t in 1..t_len {
        ineq.push(format!("h_max[{t}]"), vec![(ix(Var::H, t), 1.0)], c.h_max);
        ineq.push(format!("h_min[{t}]"), vec![(ix(Var::H, t), -1.0)], -c.h_min);
    }
    for t in 0..t_len {
        if !xhat.mode[t].is_active() {
            continue;
        }
        let m = global.mode(xhat.mode[t])?;
        ineq.push(format!("p_min[{t}]"), vec![(ix(Var::H, t), m.beta_min[0]), (ix(Var::P, t), -1.0)], -m.beta_min[1]);
        ineq.push(format!("p_max[{t}]"), vec![(ix(Var::P, t), 1.0), (ix(Var::H, t), -m.beta_max[0])], m.beta_max[1]);
    }
    let last = ix(Var::V, t_len - 1);
    ineq.push("v_target".into(), vec![(last, 1.0)], c.v_target);
    ineq.push("v_min".into(), vec![(last, -1.0)], -plant.volume_bounds().0);

    let (a, b) = eq.matrices(n);
    let (g, h) = ineq.matrices(n);
    Ok(QpInstance {
        problem: QpProblem { p: DMatrix::from_diagonal(&p_diag), q: q_lin, a, b, g, h },
        horizon: t_len,
        modes: xhat.mode.clone(),
        expansion: xhat.clone(),
        weights: weights.clone(),
        eq_labels: eq.labels,
        ineq_labels: ineq.labels,
        flow_rows,
        head_rows,
        objective_constant: constant,
    })
}
