//! Dense convex QP solver: `min ½xᵀPx + qᵀx  s.t.  Ax = b, Gx ≤ h`.
//!
//! The problem is equilibrated, equalities are eliminated through an SVD null
//! space, the reduced inequality problem is solved with a Mehrotra
//! predictor-corrector interior point method, and the result is polished on
//! the detected active set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let n = self.n();
        let ok = self.p.shape() == (n, n)
            && self.a.ncols() == n
            && self.a.nrows() == self.b.len()
            && self.g.ncols() == n
            && self.g.nrows() == self.h.len();
        if !ok {
            return Err(Error::Build(format!(
                "inconsistent QP dimensions: P {:?}, q {}, A {:?}, b {}, G {:?}, h {}",
                self.p.shape(),
                n,
                self.a.shape(),
                self.b.len(),
                self.g.shape(),
                self.h.len()
            )));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpTolerances {
    /// Target of the interior point iteration on the scaled problem.
    pub kkt: f64,
    /// Relative KKT residual required for an optimal status.
    pub accept: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for QpTolerances {
    fn default() -> Self {
        QpTolerances { kkt: 1e-8, accept: 1e-6, max_iter: 100, polish: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Relative residuals of the KKT conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub equality: f64,
    pub inequality: f64,
    pub complementarity: f64,
    /// Most negative inequality multiplier, as a positive number.
    pub dual_sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [self.stationarity, self.equality, self.inequality, self.complementarity, self.dual_sign]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Diagonal equilibration: `x = D x̃`, rows of `A` and `G` scaled by `e_a`, `e_g`, cost by `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub d: DVector<f64>,
    pub e_a: DVector<f64>,
    pub e_g: DVector<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Equality multipliers.
    pub nu: DVector<f64>,
    /// Inequality multipliers, nonnegative.
    pub z: DVector<f64>,
    /// Inequalities treated as active.
    pub active: Vec<bool>,
    pub status: QpStatus,
    /// Value of `½xᵀPx + qᵀx`.
    pub objective: f64,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub polished: bool,
    pub scaling: Scaling,
}

pub fn solve_qp(prob: &QpProblem, tol: &QpTolerances) -> Result<QpSolution> {
    prob.check_dims()?;
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    if !finite(&prob.p) || !finite(&prob.a) || !finite(&prob.g) || !prob.q.iter().chain(prob.b.iter()).chain(prob.h.iter()).all(|v| v.is_finite()) {
        return Err(Error::Numerical("non-finite QP data".into()));
    }
    let n = prob.n();
    let sc = equilibrate(prob);
    let ps = DMatrix::from_fn(n, n, |i, j| sc.c * sc.d[i] * prob.p[(i, j)] * sc.d[j]);
    let qs = DVector::from_fn(n, |i, _| sc.c * sc.d[i] * prob.q[i]);
    let as_ = DMatrix::from_fn(prob.a.nrows(), n, |k, j| sc.e_a[k] * prob.a[(k, j)] * sc.d[j]);
    let bs = prob.b.component_mul(&sc.e_a);
    let gs = DMatrix::from_fn(prob.g.nrows(), n, |k, j| sc.e_g[k] * prob.g[(k, j)] * sc.d[j]);
    let hs = prob.h.component_mul(&sc.e_g);

    let null = NullSpace::new(&as_, &bs)?;
    let Some(x0) = null.particular.clone() else {
        return Ok(infeasible(prob, sc));
    };
    let z_basis = &null.basis;
    let hr = z_basis.transpose() * &ps * z_basis;
    let cr = z_basis.transpose() * (&ps * &x0 + &qs);
    let m = &gs * z_basis;
    let d = &hs - &gs * &x0;

    let ipm = ipm_solve(&hr, &cr, &m, &d, tol)?;
    let mut status = if ipm.converged { QpStatus::Optimal } else { QpStatus::MaxIterations };
    if !ipm.converged && !phase_one_feasible(&m, &d, tol)? {
        return Ok(infeasible(prob, sc));
    }
    let mut y = ipm.y.clone();
    let mut zs = ipm.z.clone();
    let mut active: Vec<bool> = (0..d.len()).map(|i| ipm.z[i] > ipm.s[i]).collect();
    let mut polished = false;
    if tol.polish && status == QpStatus::Optimal {
        let mut trial = active.clone();
        if let Some((yp, zp)) = polish(&hr, &cr, &m, &d, &mut trial, tol) {
            y = yp;
            zs = zp;
            active = trial;
            polished = true;
        }
    }
    if !polished {
        for (i, a) in active.iter_mut().enumerate() {
            *a = zs[i] > 0.0 && ipm.s[i] < ipm.z[i];
        }
    }
    let xs = &x0 + z_basis * &y;
    let grad = &ps * &xs + &qs + gs.transpose() * &zs;
    let nus = null.multipliers(&(-grad));

    let x = xs.component_mul(&sc.d);
    let nu = nus.component_mul(&sc.e_a) / sc.c;
    let z = zs.component_mul(&sc.e_g) / sc.c;
    let residuals = kkt_residuals(prob, &x, &nu, &z);
    if status == QpStatus::Optimal && residuals.max() > tol.accept {
        status = QpStatus::MaxIterations;
    }
    Ok(QpSolution {
        objective: prob.objective(&x),
        x,
        nu,
        z,
        active,
        status,
        iterations: ipm.iterations,
        residuals,
        polished,
        scaling: sc,
    })
}

fn infeasible(prob: &QpProblem, scaling: Scaling) -> QpSolution {
    QpSolution {
        x: DVector::zeros(prob.n()),
        nu: DVector::zeros(prob.b.len()),
        z: DVector::zeros(prob.h.len()),
        active: vec![false; prob.h.len()],
        status: QpStatus::Infeasible,
        objective: f64::NAN,
        iterations: 0,
        residuals: KktResiduals::default(),
        polished: false,
        scaling,
    }
}

pub fn kkt_residuals(prob: &QpProblem, x: &DVector<f64>, nu: &DVector<f64>, z: &DVector<f64>) -> KktResiduals {
    let inf = |v: &DVector<f64>| v.amax();
    let px = &prob.p * x;
    let atn = prob.a.transpose() * nu;
    let gtz = prob.g.transpose() * z;
    let stat = &px + &prob.q + &atn + &gtz;
    let scale_s = 1.0 + inf(&px).max(inf(&prob.q)).max(inf(&atn)).max(inf(&gtz));
    let ax = &prob.a * x;
    let eq = if ax.is_empty() { 0.0 } else { inf(&(&ax - &prob.b)) / (1.0 + inf(&ax).max(inf(&prob.b))) };
    let gx = &prob.g * x;
    let mut ineq: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for i in 0..prob.h.len() {
        let row_scale = 1.0 + prob.h[i].abs().max(gx[i].abs());
        ineq = ineq.max((gx[i] - prob.h[i]).max(0.0) / row_scale);
        let slack = (prob.h[i] - gx[i]).abs() / row_scale;
        comp = comp.max(slack.min(z[i].abs() / (1.0 + inf(z))));
        dual = dual.max(-z[i] / (1.0 + inf(z)));
    }
    KktResiduals { stationarity: inf(&stat) / scale_s, equality: eq, inequality: ineq, complementarity: comp, dual_sign: dual }
}

/// Ruiz equilibration of the KKT matrix followed by cost normalization.
fn equilibrate(prob: &QpProblem) -> Scaling {
    let n = prob.n();
    let (ma, mg) = (prob.a.nrows(), prob.g.nrows());
    let mut d = DVector::from_element(n, 1.0);
    let mut e_a = DVector::from_element(ma, 1.0);
    let mut e_g = DVector::from_element(mg, 1.0);
    let safe = |v: f64| if v > 1e-12 && v.is_finite() { 1.0 / v.sqrt() } else { 1.0 };
    for _ in 0..15 {
        let mut col = vec![0.0f64; n];
        for j in 0..n {
            for i in 0..n {
                col[j] = col[j].max((d[i] * prob.p[(i, j)] * d[j]).abs());
            }
            for k in 0..ma {
                col[j] = col[j].max((e_a[k] * prob.a[(k, j)] * d[j]).abs());
            }
            for k in 0..mg {
                col[j] = col[j].max((e_g[k] * prob.g[(k, j)] * d[j]).abs());
            }
        }
        let mut row_a = vec![0.0f64; ma];
        for k in 0..ma {
            for j in 0..n {
                row_a[k] = row_a[k].max((e_a[k] * prob.a[(k, j)] * d[j]).abs());
            }
        }
        let mut row_g = vec![0.0f64; mg];
        for k in 0..mg {
            for j in 0..n {
                row_g[k] = row_g[k].max((e_g[k] * prob.g[(k, j)] * d[j]).abs());
            }
        }
        for j in 0..n {
            d[j] *= safe(col[j]);
        }
        for k in 0..ma {
            e_a[k] *= safe(row_a[k]);
        }
        for k in 0..mg {
            e_g[k] *= safe(row_g[k]);
        }
    }
    let mut cmax: f64 = 0.0;
    for i in 0..n {
        cmax = cmax.max((d[i] * prob.q[i]).abs());
        for j in 0..n {
            cmax = cmax.max((d[i] * prob.p[(i, j)] * d[j]).abs());
        }
    }
    let c = if cmax > 1e-12 { (1.0 / cmax).clamp(1e-6, 1e6) } else { 1.0 };
    Scaling { d, e_a, e_g, c }
}

/// SVD-based description of `{x : Ax = b}`.
struct NullSpace {
    particular: Option<DVector<f64>>,
    basis: DMatrix<f64>,
    /// Range part of the SVD, used for multiplier recovery.
    u_r: DMatrix<f64>,
    sigma_r: DVector<f64>,
    v_r: DMatrix<f64>,
}

impl NullSpace {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 {
            return Ok(NullSpace {
                particular: Some(DVector::zeros(n)),
                basis: DMatrix::identity(n, n),
                u_r: DMatrix::zeros(0, 0),
                sigma_r: DVector::zeros(0),
                v_r: DMatrix::zeros(n, 0),
            });
        }
        // pad to at least n rows so the SVD returns a complete right basis
        let rows = m.max(n);
        let mut padded = DMatrix::zeros(rows, n);
        padded.view_mut((0, 0), (m, n)).copy_from(a);
        let svd = padded.svd(true, true);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD without U".into()))?;
        let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD without V".into()))?;
        let sv = svd.singular_values;
        let smax = sv.max();
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
        let rank = order.iter().filter(|&&i| sv[i] > 1e-10 * smax).count();
        let u_r = DMatrix::from_fn(m, rank, |i, k| u[(i, order[k])]);
        let sigma_r = DVector::from_fn(rank, |k, _| sv[order[k]]);
        let v_r = DMatrix::from_fn(n, rank, |j, k| vt[(order[k], j)]);
        let basis = DMatrix::from_fn(n, n - rank, |j, k| vt[(order[rank + k], j)]);
        let coeff = DVector::from_fn(rank, |k, _| u_r.column(k).dot(b) / sigma_r[k]);
        let x0 = &v_r * coeff;
        let resid = (a * &x0 - b).amax();
        let particular = (resid <= 1e-8 * (1.0 + b.amax())).then_some(x0);
        Ok(NullSpace { particular, basis, u_r, sigma_r, v_r })
    }

    /// Least-squares `ν` with `Aᵀν = r`.
    fn multipliers(&self, r: &DVector<f64>) -> DVector<f64> {
        let coeff = DVector::from_fn(self.sigma_r.len(), |k, _| self.v_r.column(k).dot(r) / self.sigma_r[k]);
        &self.u_r * coeff
    }
}

struct IpmResult {
    y: DVector<f64>,
    s: DVector<f64>,
    z: DVector<f64>,
    converged: bool,
    iterations: usize,
}

/// `min ½yᵀHy + cᵀy  s.t.  My ≤ d` by Mehrotra predictor-corrector.
fn ipm_solve(hm: &DMatrix<f64>, c: &DVector<f64>, m: &DMatrix<f64>, d: &DVector<f64>, tol: &QpTolerances) -> Result<IpmResult> {
    let (l, r) = m.shape();
    let reg = 1e-12 * (1.0 + hm.amax());
    if l == 0 {
        let k = hm + DMatrix::identity(r, r) * reg;
        let y = match k.clone().cholesky() {
            Some(ch) => ch.solve(&(-c)),
            None => k.svd(true, true).solve(&(-c), 1e-12).map_err(|e| Error::Numerical(e.to_string()))?,
        };
        let converged = (hm * &y + c).amax() <= tol.kkt * (1.0 + c.amax());
        return Ok(IpmResult { y, s: DVector::zeros(0), z: DVector::zeros(0), converged, iterations: 1 });
    }
    if r == 0 {
        // equalities pin the point; only feasibility is left to decide
        let converged = d.min() >= -tol.kkt * (1.0 + d.amax());
        let s = d.map(|v| v.max(0.0));
        return Ok(IpmResult { y: DVector::zeros(0), s, z: DVector::zeros(l), converged, iterations: 0 });
    }
    let mut y = DVector::zeros(r);
    let mut s = DVector::from_fn(l, |i, _| (d[i] - (m.row(i) * &y)[0]).max(1.0));
    let mut z = DVector::from_element(l, 1.0);
    let c_norm = 1.0 + c.amax();
    let d_norm = 1.0 + d.amax();
    let mt = m.transpose();
    for it in 0..tol.max_iter {
        let rd = hm * &y + c + &mt * &z;
        let rp = m * &y + &s - d;
        let mu = s.dot(&z) / l as f64;
        if rd.amax() <= tol.kkt * c_norm && rp.amax() <= tol.kkt * d_norm && mu <= tol.kkt {
            return Ok(IpmResult { y, s, z, converged: true, iterations: it });
        }
        if z.amax() > 1e14 || !mu.is_finite() {
            break;
        }
        let w = z.component_div(&s);
        let mut k = hm.clone();
        for i in 0..l {
            let row = m.row(i);
            k += row.transpose() * row * w[i];
        }
        let factor = factorize(k, reg)?;
        let solve_dir = |rc: &DVector<f64>| {
            // (H + MᵀWM)Δy = −r_d + MᵀS⁻¹(r_c − Z r_p)
            let t = DVector::from_fn(l, |i, _| (rc[i] - z[i] * rp[i]) / s[i]);
            let dy = factor.solve(&(-&rd + &mt * t));
            let ds = -&rp - m * &dy;
            let dz = DVector::from_fn(l, |i, _| (-rc[i] - z[i] * ds[i]) / s[i]);
            (dy, ds, dz)
        };
        let rc_aff = s.component_mul(&z);
        let (_, ds_a, dz_a) = solve_dir(&rc_aff);
        let alpha_a = step_length(&s, &ds_a).min(step_length(&z, &dz_a));
        let mu_aff = (&s + &ds_a * alpha_a).dot(&(&z + &dz_a * alpha_a)) / l as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = DVector::from_fn(l, |i, _| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu);
        let (dy, ds, dz) = solve_dir(&rc);
        let alpha = (0.99 * step_length(&s, &ds).min(step_length(&z, &dz))).min(1.0);
        y += &dy * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        for i in 0..l {
            s[i] = s[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
    }
    let rd = hm * &y + c + &mt * &z;
    let rp = m * &y + &s - d;
    let mu = s.dot(&z) / l as f64;
    let converged = rd.amax() <= 1e2 * tol.kkt * c_norm && rp.amax() <= 1e2 * tol.kkt * d_norm && mu <= 1e2 * tol.kkt;
    Ok(IpmResult { y, s, z, converged, iterations: tol.max_iter })
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(rhs),
            Factor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }
}

fn factorize(k: DMatrix<f64>, reg: f64) -> Result<Factor> {
    let n = k.nrows();
    let mut shift = reg;
    for _ in 0..8 {
        if let Some(ch) = (&k + DMatrix::identity(n, n) * shift).cholesky() {
            return Ok(Factor::Chol(ch));
        }
        shift = (shift * 100.0).max(1e-10);
    }
    let lu = (k + DMatrix::identity(n, n) * shift).lu();
    if lu.is_invertible() {
        Ok(Factor::Lu(lu))
    } else {
        Err(Error::Numerical("interior point Newton system is singular".into()))
    }
}

fn step_length(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

/// Re-solve the equality-constrained problem on the active set, repairing the
/// set one row at a time until multipliers and slacks have the right signs.
fn polish(
    hm: &DMatrix<f64>,
    c: &DVector<f64>,
    m: &DMatrix<f64>,
    d: &DVector<f64>,
    active: &mut [bool],
    tol: &QpTolerances,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let z_scale = 1.0 + c.amax();
    for _ in 0..2 * active.len().max(1) {
        let idx: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        let (y, za) = solve_equality_kkt(hm, c, m, d, &idx, tol)?;
        let worst_dual = idx.iter().zip(za.iter()).filter(|(_, &z)| z < -tol.kkt * z_scale).min_by(|a, b| a.1.total_cmp(b.1));
        if let Some((&i, _)) = worst_dual {
            active[i] = false;
            continue;
        }
        let my = m * &y;
        let worst_primal = (0..active.len())
            .filter(|&i| !active[i])
            .map(|i| (i, (my[i] - d[i]) / (1.0 + d[i].abs())))
            .filter(|&(_, v)| v > tol.kkt)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = worst_primal {
            active[i] = true;
            continue;
        }
        let mut z = DVector::zeros(active.len());
        for (&i, &zi) in idx.iter().zip(za.iter()) {
            z[i] = zi.max(0.0);
        }
        return Some((y, z));
    }
    None
}

fn solve_equality_kkt(
    hm: &DMatrix<f64>,
    c: &DVector<f64>,
    m: &DMatrix<f64>,
    d: &DVector<f64>,
    idx: &[usize],
    tol: &QpTolerances,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let r = hm.nrows();
    let na = idx.len();
    if r + na == 0 {
        return Some((DVector::zeros(0), Vec::new()));
    }
    let k = k_check(hm, m, idx);
    let mut rhs = DVector::zeros(r + na);
    rhs.rows_mut(0, r).copy_from(&(-c));
    for (a, &i) in idx.iter().enumerate() {
        rhs[r + a] = d[i];
    }
    let sol = match k.clone().lu().solve(&rhs) {
        Some(s) => s,
        None => {
            let svd = k.clone().svd(true, true);
            let cut = 1e-12 * svd.singular_values.max();
            let s = svd.solve(&rhs, cut).ok()?;
            // a least-squares polish is only acceptable if it solves the system
            if (&k * &s - &rhs).amax() > tol.kkt * (1.0 + rhs.amax()) {
                return None;
            }
            s
        }
    };
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, r).into_owned(), sol.rows(r, na).iter().copied().collect()))
}

fn k_check(hm: &DMatrix<f64>, m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let r = hm.nrows();
    let na = idx.len();
    let mut k = DMatrix::zeros(r + na, r + na);
    k.view_mut((0, 0), (r, r)).copy_from(hm);
    for (a, &i) in idx.iter().enumerate() {
        for j in 0..r {
            k[(r + a, j)] = m[(i, j)];
            k[(j, r + a)] = m[(i, j)];
        }
    }
    k
}

/// Whether `{y : My ≤ d}` is nonempty, via `min t  s.t.  My − t ≤ d, t ≥ −1`.
fn phase_one_feasible(m: &DMatrix<f64>, d: &DVector<f64>, tol: &QpTolerances) -> Result<bool> {
    let (l, r) = m.shape();
    if l == 0 {
        return Ok(true);
    }
    let mut m1 = DMatrix::zeros(l + 1, r + 1);
    m1.view_mut((0, 0), (l, r)).copy_from(m);
    for i in 0..l {
        m1[(i, r)] = -1.0;
    }
    m1[(l, r)] = -1.0;
    let mut d1 = DVector::zeros(l + 1);
    d1.rows_mut(0, l).copy_from(d);
    d1[l] = 1.0;
    let mut c1 = DVector::zeros(r + 1);
    c1[r] = 1.0;
    let h1 = DMatrix::identity(r + 1, r + 1) * 1e-9;
    let res = ipm_solve(&h1, &c1, &m1, &d1, &QpTolerances { max_iter: 200, ..*tol })?;
    Ok(res.y[r] <= 1e-6 * (1.0 + d.amax()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unconstrained(p: &[f64], q: &[f64]) -> QpProblem {
        let n = p.len();
        QpProblem {
            p: DMatrix::from_diagonal(&DVector::from_column_slice(p)),
            q: DVector::from_column_slice(q),
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
        }
    }

    #[test]
    fn closed_form_stationarity() {
        // maximize Δt(λp − Cp²) − w(p − p̂)²: p = (Δtλ + 2wp̂)/(2ΔtC + 2w)
        let (lam, c, w, ph) = (80.0, 0.4, 3.0, 12.0);
        let prob = unconstrained(&[2.0 * (c + w)], &[-(lam + 2.0 * w * ph)]);
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        let want = (lam + 2.0 * w * ph) / (2.0 * c + 2.0 * w);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - want).abs() < 1e-10);
    }

    #[test]
    fn box_constrained_projection() {
        let mut prob = unconstrained(&[1.0, 1.0], &[-3.0, 0.5]);
        prob.g = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        prob.h = DVector::from_column_slice(&[1.0, 1.0, 1.0, 1.0]);
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-10 && (sol.x[1] + 0.5).abs() < 1e-10);
        assert!((sol.z[0] - 2.0).abs() < 1e-8);
        assert_eq!(sol.active, vec![true, false, false, false]);
        assert!(sol.residuals.max() < 1e-9);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut prob = unconstrained(&[1.0, 1.0], &[0.0, 0.0]);
        prob.a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        prob.b = DVector::from_column_slice(&[1.0, 2.0]);
        assert_eq!(solve_qp(&prob, &QpTolerances::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn contradictory_inequalities_are_infeasible() {
        let mut prob = unconstrained(&[1.0], &[0.0]);
        prob.g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        prob.h = DVector::from_column_slice(&[-1.0, -1.0]);
        assert_eq!(solve_qp(&prob, &QpTolerances::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn pinned_point_with_tight_inequality() {
        let mut prob = unconstrained(&[1.0, 1.0], &[2.0, -1.0]);
        prob.a = DMatrix::identity(2, 2);
        prob.b = DVector::from_column_slice(&[1.0, 0.0]);
        prob.g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        prob.h = DVector::from_column_slice(&[1.0, 5.0]);
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_eq!((sol.x[0], sol.x[1]), (1.0, 0.0));
        assert!(sol.residuals.max() < 1e-12);
        prob.h[0] = 0.5;
        assert_eq!(solve_qp(&prob, &QpTolerances::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut prob = unconstrained(&[1.0, 1.0], &[0.0, 0.0]);
        prob.a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        prob.b = DVector::from_column_slice(&[1.0, 2.0]);
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 0.5).abs() < 1e-10 && (sol.x[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_build_error() {
        let mut prob = unconstrained(&[1.0, 1.0], &[0.0, 0.0]);
        prob.b = DVector::zeros(1);
        assert!(matches!(solve_qp(&prob, &QpTolerances::default()), Err(Error::Build(_))));
    }

    #[test]
    fn badly_scaled_columns() {
        // x1 in units of 1e5 tied to x0
        let mut prob = unconstrained(&[2.0, 0.0], &[-4.0, 0.0]);
        prob.a = DMatrix::from_row_slice(1, 2, &[1e5, -1.0]);
        prob.b = DVector::from_column_slice(&[0.0]);
        prob.g = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        prob.h = DVector::from_column_slice(&[1.5e5]);
        let sol = solve_qp(&prob, &QpTolerances::default()).unwrap();
        assert!((sol.x[0] - 1.5).abs() < 1e-9, "{}", sol.x);
        assert!((sol.x[1] - 1.5e5).abs() < 1e-4);
    }
}
