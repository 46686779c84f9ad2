//! Recursive linearize-and-solve refinement with an annealed trust region, and its reverse pass.

use nalgebra::{DMatrix, DVector};

use super::diff::KktSystem;
use super::penalized::{build_penalized_qp, PenaltyWeights, QpInstance, Var};
use super::solver::{solve_qp, QpSolution, QpStatus, QpTolerances};
use crate::approx::{local_linearize, GlobalLinearModel, LocalLinearization};
use crate::error::{Error, Result};
use crate::plant::{Plant, Trajectory};

/// Sensitivity of the primal solution to the `3T` penalty weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QpJacobian {
    /// `4T × 3T`, columns ordered `[w_p, w_q, w_h]`.
    pub jacobian: DMatrix<f64>,
    pub degenerate: bool,
    pub least_squares: bool,
}

pub fn differentiate_qp(inst: &QpInstance, sol: &QpSolution) -> Result<QpJacobian> {
    let kkt = KktSystem::new(&inst.problem, sol)?;
    let t_len = inst.horizon;
    let n = 4 * t_len;
    let mut jac = DMatrix::zeros(n, 3 * t_len);
    let centre = [&inst.expansion.power, &inst.expansion.flow, &inst.expansion.head];
    for (c, var) in [Var::P, Var::Q, Var::H].into_iter().enumerate() {
        for t in 0..t_len {
            let j = inst.var(var, t);
            // dP x + dq for a unit change of this weight
            let mut r = DVector::zeros(kkt.dim());
            r[j] = 2.0 * (sol.x[j] - centre[c][t]);
            jac.set_column(c * t_len + t, &kkt.jvp(&r)?);
        }
    }
    Ok(QpJacobian { jacobian: jac, degenerate: kkt.degenerate, least_squares: kkt.least_squares })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Number of linearize-and-solve passes `K`.
    pub iterations: usize,
    /// Growth factor of the weights between passes.
    pub gamma: f64,
    pub tol: QpTolerances,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { iterations: 3, gamma: 2.0, tol: QpTolerances::default() }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("refinement needs at least one pass".into()));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::InvalidArgument(format!("growth factor {} must exceed 1", self.gamma)));
        }
        Ok(())
    }
}

/// One pass of the refinement, kept for the reverse sweep.
#[derive(Debug, Clone)]
pub struct RefineStep {
    pub instance: QpInstance,
    pub linearization: LocalLinearization,
    pub solution: QpSolution,
    /// `γ^k`, the factor applied to the base weights.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub trajectory: Trajectory,
    /// Solved passes in order; a failed pass ends the list.
    pub steps: Vec<RefineStep>,
    /// Set when a pass was infeasible and the previous iterate was kept.
    pub fell_back: bool,
    pub warm: Trajectory,
}

impl RefineResult {
    /// `‖x̂^(k+1) − x̂^(k)‖₂` over the power, flow and head coordinates.
    pub fn step_norms(&self) -> Vec<f64> {
        self.steps
            .iter()
            .map(|s| {
                let prev = &s.instance.expansion;
                let next = s.instance.trajectory(&s.solution.x);
                (0..next.horizon())
                    .map(|t| {
                        (next.power[t] - prev.power[t]).powi(2)
                            + (next.flow[t] - prev.flow[t]).powi(2)
                            + (next.head[t] - prev.head[t]).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

pub fn recursive_refine(
    plant: &Plant,
    global: &GlobalLinearModel,
    prices: &[f64],
    warm: &Trajectory,
    w0: &PenaltyWeights,
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    cfg.validate()?;
    warm.validate()?;
    let mut xhat = warm.clone();
    let mut steps = Vec::with_capacity(cfg.iterations);
    let mut fell_back = false;
    let mut scale = 1.0;
    for _ in 0..cfg.iterations {
        let lin = local_linearize(plant, &xhat)?;
        let inst = build_penalized_qp(plant, global, prices, &xhat, &lin, &w0.scaled(scale))?;
        let sol = solve_qp(&inst.problem, &cfg.tol)?;
        if sol.status != QpStatus::Optimal {
            fell_back = true;
            break;
        }
        let mut next = inst.trajectory(&sol.x);
        let c = &plant.config;
        for h in next.head.iter_mut() {
            *h = h.clamp(c.h_min, c.h_max);
        }
        steps.push(RefineStep { instance: inst, linearization: lin, solution: sol, scale });
        xhat = next;
        scale *= cfg.gamma;
    }
    Ok(RefineResult { trajectory: xhat, steps, fell_back, warm: warm.clone() })
}

/// Gradients of a loss on the refined trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineGrad {
    /// With respect to the base weights `w⁰`.
    pub weights: PenaltyWeights,
    /// With respect to the warm start, laid out as `[p, q, h, v]`.
    pub warm: Vec<f64>,
    pub degenerate: bool,
    pub least_squares: bool,
}

/// Reverse sweep through every pass for `dL/dx̂^(K) = grad` (layout `[p, q, h, v]`).
pub fn refine_backward(res: &RefineResult, grad: &[f64]) -> Result<RefineGrad> {
    let t_len = res.warm.horizon();
    if grad.len() != 4 * t_len {
        return Err(Error::InvalidArgument(format!("seed has length {}, expected {}", grad.len(), 4 * t_len)));
    }
    let mut g = DVector::from_column_slice(grad);
    let mut gw = PenaltyWeights::uniform(t_len, 0.0);
    let (mut degenerate, mut least_squares) = (false, false);
    for step in res.steps.iter().rev() {
        let inst = &step.instance;
        let sol = &step.solution;
        let kkt = KktSystem::new(&inst.problem, sol)?;
        degenerate |= kkt.degenerate;
        least_squares |= kkt.least_squares;
        let adj = kkt.vjp(&g, inst.problem.h.len())?;
        let x = &sol.x;
        let e = &inst.expansion;
        let w = &inst.weights;
        let lin = &step.linearization;
        let mut prev = DVector::zeros(4 * t_len);
        for t in 0..t_len {
            let (ip, iq, ih) = (inst.var(Var::P, t), inst.var(Var::Q, t), inst.var(Var::H, t));
            let (up, uq, uh) = (adj.u_x[ip], adj.u_x[iq], adj.u_x[ih]);
            gw.w_p[t] += step.scale * -2.0 * up * (x[ip] - e.power[t]);
            gw.w_q[t] += step.scale * -2.0 * uq * (x[iq] - e.flow[t]);
            gw.w_h[t] += step.scale * -2.0 * uh * (x[ih] - e.head[t]);
            prev[ip] += 2.0 * w.w_p[t] * up;
            prev[iq] += 2.0 * w.w_q[t] * uq;
            prev[ih] += 2.0 * w.w_h[t] * uh;

            if let Some(tay) = &lin.flow_taylor[t] {
                let r = inst.flow_rows[t];
                let d_xi0 = -adj.grad_a(sol, r, ip);
                let d_xi1 = -adj.grad_a(sol, r, ih);
                let d_xi2 = adj.grad_b(r);
                let (ph, hh) = (e.power[t], e.head[t]);
                prev[ip] += d_xi0 * tay.dpp + d_xi1 * tay.dph - d_xi2 * (tay.dpp * ph + tay.dph * hh);
                prev[ih] += d_xi0 * tay.dph + d_xi1 * tay.dhh - d_xi2 * (tay.dph * ph + tay.dhh * hh);
            }
            if t > 0 {
                let r = inst.head_rows[t];
                let d_s = -adj.grad_a(sol, r, ih);
                let d_r = adj.grad_b(r);
                let curv = lin.volume_curvature[t];
                prev[ih] += d_s * curv - d_r * curv * e.head[t];
            }
        }
        g = prev;
    }
    Ok(RefineGrad { weights: gw, warm: g.iter().copied().collect(), degenerate, least_squares })
}
