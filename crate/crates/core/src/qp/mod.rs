//! Penalized convex QP: generic solver, scheduling formulation, sensitivities, recursive refinement.

pub mod diff;
pub mod penalized;
pub mod refine;
pub mod solver;

pub use diff::{KktSystem, QpAdjoint};
pub use penalized::{build_penalized_qp, PenaltyWeights, QpInstance, Var};
pub use refine::{differentiate_qp, recursive_refine, refine_backward, QpJacobian, RefineConfig, RefineGrad, RefineResult, RefineStep};
pub use solver::{kkt_residuals, solve_qp, KktResiduals, QpProblem, QpSolution, QpStatus, QpTolerances, Scaling};
