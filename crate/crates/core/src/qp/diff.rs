//! Sensitivities of a QP optimum through its KKT conditions on a frozen active set.

use nalgebra::{DMatrix, DVector};

use super::solver::{QpProblem, QpSolution, QpStatus};
use crate::error::{Error, Result};

/// Factorized KKT matrix `[P Aᵀ G_aᵀ; A 0 0; G_a 0 0]` at a solution.
#[derive(Debug, Clone)]
pub struct KktSystem {
    n: usize,
    m_eq: usize,
    active: Vec<usize>,
    scale: DVector<f64>,
    solver: KktSolver,
    /// An active constraint carries a near-zero multiplier.
    pub degenerate: bool,
    /// The KKT matrix was singular and a least-squares solve was used.
    pub least_squares: bool,
}

#[derive(Debug, Clone)]
enum KktSolver {
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Adjoint of a scalar loss through the solution map.
#[derive(Debug, Clone, PartialEq)]
pub struct QpAdjoint {
    pub u_x: DVector<f64>,
    pub u_nu: DVector<f64>,
    /// Indexed like the inequalities; zero on inactive rows.
    pub u_z: DVector<f64>,
}

impl QpAdjoint {
    pub fn grad_q(&self, j: usize) -> f64 {
        -self.u_x[j]
    }

    pub fn grad_p(&self, sol: &QpSolution, i: usize, j: usize) -> f64 {
        -self.u_x[i] * sol.x[j]
    }

    pub fn grad_a(&self, sol: &QpSolution, k: usize, j: usize) -> f64 {
        -(self.u_x[j] * sol.nu[k] + self.u_nu[k] * sol.x[j])
    }

    pub fn grad_b(&self, k: usize) -> f64 {
        self.u_nu[k]
    }

    pub fn grad_g(&self, sol: &QpSolution, k: usize, j: usize) -> f64 {
        -(self.u_x[j] * sol.z[k] + self.u_z[k] * sol.x[j])
    }

    pub fn grad_h(&self, k: usize) -> f64 {
        self.u_z[k]
    }
}

impl KktSystem {
    pub fn new(prob: &QpProblem, sol: &QpSolution) -> Result<Self> {
        if sol.status != QpStatus::Optimal {
            return Err(Error::Numerical(format!("cannot differentiate a {:?} solution", sol.status)));
        }
        let n = prob.n();
        let m_eq = prob.a.nrows();
        let active: Vec<usize> = (0..sol.active.len()).filter(|&i| sol.active[i]).collect();
        let dim = n + m_eq + active.len();
        let sc = &sol.scaling;
        // symmetric equilibration reusing the solver scaling
        let scale = DVector::from_fn(dim, |i, _| {
            if i < n {
                sc.d[i]
            } else if i < n + m_eq {
                sc.e_a[i - n]
            } else {
                sc.e_g[active[i - n - m_eq]]
            }
        });
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&prob.p);
        for r in 0..m_eq {
            for j in 0..n {
                k[(n + r, j)] = prob.a[(r, j)];
                k[(j, n + r)] = prob.a[(r, j)];
            }
        }
        for (a, &i) in active.iter().enumerate() {
            for j in 0..n {
                k[(n + m_eq + a, j)] = prob.g[(i, j)];
                k[(j, n + m_eq + a)] = prob.g[(i, j)];
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                k[(i, j)] *= scale[i] * scale[j];
            }
        }
        let z_scale = 1e-8 * (1.0 + sol.z.amax());
        let degenerate = active.iter().any(|&i| sol.z[i] <= z_scale);
        let lu = k.clone().lu();
        let cond_ok = lu.is_invertible() && {
            let u = lu.u();
            let diag = u.diagonal().abs();
            diag.min() > 1e-13 * diag.max()
        };
        let (solver, least_squares) =
            if cond_ok { (KktSolver::Lu(lu), false) } else { (KktSolver::Svd(k.svd(true, true)), true) };
        Ok(KktSystem { n, m_eq, active, scale, solver, degenerate, least_squares })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Solve `K w = r` in original units.
    pub fn solve(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let rs = r.component_mul(&self.scale);
        let ws = match &self.solver {
            KktSolver::Lu(lu) => lu.solve(&rs).ok_or_else(|| Error::Numerical("KKT solve failed".into()))?,
            KktSolver::Svd(svd) => {
                let tol = 1e-12 * svd.singular_values.max();
                svd.solve(&rs, tol).map_err(|e| Error::Numerical(e.to_string()))?
            }
        };
        Ok(ws.component_mul(&self.scale))
    }

    /// Reverse-mode pass for `dL/dx = g`.
    pub fn vjp(&self, g: &DVector<f64>, n_ineq: usize) -> Result<QpAdjoint> {
        if g.len() != self.n {
            return Err(Error::InvalidArgument(format!("adjoint seed has length {}, expected {}", g.len(), self.n)));
        }
        let mut rhs = DVector::zeros(self.dim());
        rhs.rows_mut(0, self.n).copy_from(g);
        let u = self.solve(&rhs)?;
        let mut u_z = DVector::zeros(n_ineq);
        for (a, &i) in self.active.iter().enumerate() {
            u_z[i] = u[self.n + self.m_eq + a];
        }
        Ok(QpAdjoint { u_x: u.rows(0, self.n).into_owned(), u_nu: u.rows(self.n, self.m_eq).into_owned(), u_z })
    }

    /// Forward sensitivity `dx` for a parameter whose KKT residual derivative is
    /// `(dP x + dq + dAᵀν + dG_aᵀz_a, dA x − db, dG_a x − dh_a)`.
    pub fn jvp(&self, residual: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.solve(&(-residual))?;
        Ok(w.rows(0, self.n).into_owned())
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn m_eq(&self) -> usize {
        self.m_eq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::solver::{solve_qp, QpTolerances};

    fn problem(q0: f64) -> QpProblem {
        QpProblem {
            p: DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 3.0]),
            q: DVector::from_column_slice(&[q0, -1.0, 0.5]),
            a: DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            b: DVector::from_column_slice(&[1.0]),
            g: DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]),
            h: DVector::from_column_slice(&[0.3]),
        }
    }

    #[test]
    fn vjp_matches_finite_difference_in_q() {
        let tol = QpTolerances::default();
        let prob = problem(-2.0);
        let sol = solve_qp(&prob, &tol).unwrap();
        assert!(sol.active[0]);
        let kkt = KktSystem::new(&prob, &sol).unwrap();
        let g = DVector::from_column_slice(&[1.0, -2.0, 0.7]);
        let adj = kkt.vjp(&g, 1).unwrap();
        let eps = 1e-6;
        let lp = g.dot(&solve_qp(&problem(-2.0 + eps), &tol).unwrap().x);
        let lm = g.dot(&solve_qp(&problem(-2.0 - eps), &tol).unwrap().x);
        let fd = (lp - lm) / (2.0 * eps);
        assert!((adj.grad_q(0) - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{} vs {fd}", adj.grad_q(0));
    }

    #[test]
    fn vjp_matches_finite_difference_in_b_and_a() {
        let tol = QpTolerances::default();
        let base = problem(-2.0);
        let sol = solve_qp(&base, &tol).unwrap();
        let kkt = KktSystem::new(&base, &sol).unwrap();
        let g = DVector::from_column_slice(&[0.3, 1.0, -1.0]);
        let adj = kkt.vjp(&g, 1).unwrap();
        let eps = 1e-6;
        let loss = |f: &dyn Fn(&mut QpProblem)| {
            let mut p = base.clone();
            f(&mut p);
            g.dot(&solve_qp(&p, &tol).unwrap().x)
        };
        let fd_b = (loss(&|p| p.b[0] += eps) - loss(&|p| p.b[0] -= eps)) / (2.0 * eps);
        assert!((adj.grad_b(0) - fd_b).abs() < 1e-6);
        let fd_a = (loss(&|p| p.a[(0, 2)] += eps) - loss(&|p| p.a[(0, 2)] -= eps)) / (2.0 * eps);
        assert!((adj.grad_a(&sol, 0, 2) - fd_a).abs() < 1e-6);
        let fd_h = (loss(&|p| p.h[0] += eps) - loss(&|p| p.h[0] -= eps)) / (2.0 * eps);
        assert!((adj.grad_h(0) - fd_h).abs() < 1e-6);
        let fd_p = (loss(&|p| p.p[(2, 2)] += eps) - loss(&|p| p.p[(2, 2)] -= eps)) / (2.0 * eps);
        assert!((adj.grad_p(&sol, 2, 2) - fd_p).abs() < 1e-6);
    }

    #[test]
    fn infeasible_solution_cannot_be_differentiated() {
        let mut prob = problem(0.0);
        prob.h[0] = 5.0;
        prob.g = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]);
        prob.h[0] = -1.0;
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        assert!(KktSystem::new(&prob, &sol).is_err());
    }
}
