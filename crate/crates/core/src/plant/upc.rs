//! Unit performance curves: flow as a bivariate polynomial in power and head,
//! one polynomial per active mode, plus head-dependent power envelopes.
//!
//! Polynomials are stored on shifted and scaled coordinates so that degree-5
//! fits over a 50–99 m head range stay well conditioned.
//! [`BivariatePoly::raw_coefficients`] expands back to plain monomials.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};

/// Relative singular-value floor under which a design matrix counts as rank deficient.
const RANK_TOL: f64 = 1e-12;
/// Slack on the fitted head range when checking arguments.
const HEAD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariatePoly {
    pub degree: usize,
    /// `c_ab` for `a = 0..=d`, `b = 0..=d-a`, row-major in `a`.
    pub coeffs: Vec<f64>,
    pub p_shift: f64,
    pub p_scale: f64,
    pub h_shift: f64,
    pub h_scale: f64,
}

/// Value, gradient and Hessian of a bivariate polynomial at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor2 {
    pub value: f64,
    pub dp: f64,
    pub dh: f64,
    pub dpp: f64,
    pub dph: f64,
    pub dhh: f64,
}

pub fn n_terms(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

impl BivariatePoly {
    /// Polynomial on raw coordinates; `coeffs` ordered as in [`BivariatePoly::coeffs`].
    pub fn from_monomials(degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != n_terms(degree) {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} needs {} coefficients, got {}",
                n_terms(degree),
                coeffs.len()
            )));
        }
        Ok(BivariatePoly { degree, coeffs, p_shift: 0.0, p_scale: 1.0, h_shift: 0.0, h_scale: 1.0 })
    }

    pub fn eval(&self, p: f64, h: f64) -> f64 {
        let x = (p - self.p_shift) / self.p_scale;
        let y = (h - self.h_shift) / self.h_scale;
        let d = self.degree;
        let mut total = 0.0;
        let mut k = 0;
        let mut xa = 1.0;
        for a in 0..=d {
            // Horner in y for the row of fixed a
            let row = &self.coeffs[k..k + d - a + 1];
            let mut acc = 0.0;
            for c in row.iter().rev() {
                acc = acc * y + c;
            }
            total += xa * acc;
            xa *= x;
            k += d - a + 1;
        }
        total
    }

    pub fn taylor(&self, p: f64, h: f64) -> Taylor2 {
        let x = (p - self.p_shift) / self.p_scale;
        let y = (h - self.h_shift) / self.h_scale;
        let d = self.degree;
        let mut xp = vec![1.0; d + 1];
        let mut yp = vec![1.0; d + 1];
        for i in 1..=d {
            xp[i] = xp[i - 1] * x;
            yp[i] = yp[i - 1] * y;
        }
        let (mut f, mut fx, mut fy, mut fxx, mut fxy, mut fyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut k = 0;
        for a in 0..=d {
            for b in 0..=d - a {
                let c = self.coeffs[k];
                k += 1;
                let (af, bf) = (a as f64, b as f64);
                f += c * xp[a] * yp[b];
                if a >= 1 {
                    fx += c * af * xp[a - 1] * yp[b];
                }
                if b >= 1 {
                    fy += c * bf * xp[a] * yp[b - 1];
                }
                if a >= 2 {
                    fxx += c * af * (af - 1.0) * xp[a - 2] * yp[b];
                }
                if a >= 1 && b >= 1 {
                    fxy += c * af * bf * xp[a - 1] * yp[b - 1];
                }
                if b >= 2 {
                    fyy += c * bf * (bf - 1.0) * xp[a] * yp[b - 2];
                }
            }
        }
        let (sp, sh) = (self.p_scale, self.h_scale);
        Taylor2 { value: f, dp: fx / sp, dh: fy / sh, dpp: fxx / (sp * sp), dph: fxy / (sp * sh), dhh: fyy / (sh * sh) }
    }

    /// Coefficients on plain monomials `p^a h^b`, same ordering as `coeffs`.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        let d = self.degree;
        let mut offsets = Vec::with_capacity(d + 1);
        let mut k = 0;
        for a in 0..=d {
            offsets.push(k);
            k += d - a + 1;
        }
        let mut raw = vec![0.0; n_terms(d)];
        let binom = |n: usize, r: usize| -> f64 { (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
        let mut k = 0;
        for a in 0..=d {
            for b in 0..=d - a {
                let c = self.coeffs[k];
                k += 1;
                if c == 0.0 {
                    continue;
                }
                let pa = self.p_scale.powi(a as i32);
                let hb = self.h_scale.powi(b as i32);
                for i in 0..=a {
                    let cp = binom(a, i) * (-self.p_shift).powi((a - i) as i32) / pa;
                    for j in 0..=b {
                        let ch = binom(b, j) * (-self.h_shift).powi((b - j) as i32) / hb;
                        raw[offsets[i] + j] += c * cp * ch;
                    }
                }
            }
        }
        raw
    }
}

/// Polynomial in one variable on a shifted and scaled axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly1 {
    /// Ascending powers of `(h - shift) / scale`.
    pub coeffs: Vec<f64>,
    pub shift: f64,
    pub scale: f64,
}

impl Poly1 {
    pub fn constant(c: f64) -> Self {
        Poly1 { coeffs: vec![c], shift: 0.0, scale: 1.0 }
    }

    /// Value and first derivative.
    pub fn eval(&self, h: f64) -> (f64, f64) {
        let y = (h - self.shift) / self.scale;
        let mut v = 0.0;
        let mut dv = 0.0;
        for c in self.coeffs.iter().rev() {
            dv = dv * y + v;
            v = v * y + c;
        }
        (v, dv / self.scale)
    }

    pub fn fit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Self> {
        if xs.len() < degree + 1 {
            return Err(Error::Regression(format!("{} points cannot fit degree {degree}", xs.len())));
        }
        let (shift, scale) = centre_scale(xs);
        let design = DMatrix::from_fn(xs.len(), degree + 1, |i, j| ((xs[i] - shift) / scale).powi(j as i32));
        let coeffs = least_squares(design, DVector::from_column_slice(ys))
            .ok_or_else(|| Error::Regression("envelope design matrix is rank deficient".into()))?;
        Ok(Poly1 { coeffs, shift, scale })
    }
}

/// Flow polynomial and power envelope of one active mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCurve {
    pub flow: BivariatePoly,
    /// Most negative admissible power (pump) or smallest turbine power.
    pub p_min: Poly1,
    pub p_max: Poly1,
    /// Coefficient of determination on the data the flow polynomial was fitted to.
    pub r2: f64,
}

/// Per-mode surrogate. Turbine power and flow are positive, pump power and flow negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpcModel {
    pub turbine: ModeCurve,
    pub pump: ModeCurve,
    pub h_lo: f64,
    pub h_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpcSample {
    pub mode: Mode,
    pub p_mw: f64,
    pub h_m: f64,
    pub q_m3s: f64,
}

impl UpcModel {
    pub fn curve(&self, mode: Mode) -> Result<&ModeCurve> {
        match mode {
            Mode::Turbine => Ok(&self.turbine),
            Mode::Pump => Ok(&self.pump),
            Mode::Idle => Err(Error::InvalidArgument("idle mode has no performance curve".into())),
        }
    }

    fn check_head(&self, h: f64) -> Result<()> {
        let slack = HEAD_SLACK * (1.0 + self.h_hi.abs());
        if !h.is_finite() || h < self.h_lo - slack || h > self.h_hi + slack {
            return Err(Error::Domain(format!("head {h} outside [{}, {}]", self.h_lo, self.h_hi)));
        }
        Ok(())
    }

    /// Flow at power `p` and head `h`.
    pub fn flow(&self, mode: Mode, p: f64, h: f64) -> Result<f64> {
        let curve = self.curve(mode)?;
        self.check_head(h)?;
        Ok(curve.flow.eval(p, h))
    }

    /// `(∂q/∂p, ∂q/∂h)`.
    pub fn flow_grad(&self, mode: Mode, p: f64, h: f64) -> Result<(f64, f64)> {
        let curve = self.curve(mode)?;
        self.check_head(h)?;
        let t = curve.flow.taylor(p, h);
        Ok((t.dp, t.dh))
    }

    pub fn flow_taylor(&self, mode: Mode, p: f64, h: f64) -> Result<Taylor2> {
        let curve = self.curve(mode)?;
        self.check_head(h)?;
        Ok(curve.flow.taylor(p, h))
    }

    /// `(p_min, p_max)` at head `h`.
    pub fn envelope(&self, mode: Mode, h: f64) -> Result<(f64, f64)> {
        let curve = self.curve(mode)?;
        Ok((curve.p_min.eval(h).0, curve.p_max.eval(h).0))
    }

    /// Envelope bounds with their head slopes: `((lo, dlo/dh), (hi, dhi/dh))`.
    pub fn envelope_with_slope(&self, mode: Mode, h: f64) -> Result<((f64, f64), (f64, f64))> {
        let curve = self.curve(mode)?;
        Ok((curve.p_min.eval(h), curve.p_max.eval(h)))
    }

    /// Checks envelope sign and ordering on `n` heads across `[h_lo, h_hi]`.
    pub fn validate(&self, n: usize) -> Result<()> {
        for i in 0..n.max(2) {
            let h = self.h_lo + (self.h_hi - self.h_lo) * i as f64 / (n.max(2) - 1) as f64;
            let (tl, th) = self.envelope(Mode::Turbine, h)?;
            let (pl, ph) = self.envelope(Mode::Pump, h)?;
            if !(tl > 0.0 && th >= tl) {
                return Err(Error::Validation(format!("turbine envelope [{tl}, {th}] invalid at h = {h}")));
            }
            if !(ph < 0.0 && pl <= ph) {
                return Err(Error::Validation(format!("pump envelope [{pl}, {ph}] invalid at h = {h}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Least-squares fit of every mode's flow polynomial (total degree `degree`)
/// and of a quadratic power envelope in head.
pub fn upc_fit(samples: &[UpcSample], degree: usize) -> Result<UpcModel> {
    upc_fit_with(samples, degree, 2)
}

pub fn upc_fit_with(samples: &[UpcSample], degree: usize, envelope_degree: usize) -> Result<UpcModel> {
    let turbine = fit_mode(samples, Mode::Turbine, degree, envelope_degree)?;
    let pump = fit_mode(samples, Mode::Pump, degree, envelope_degree)?;
    let heads = samples.iter().filter(|s| s.mode != Mode::Idle).map(|s| s.h_m);
    let h_lo = heads.clone().fold(f64::INFINITY, f64::min);
    let h_hi = heads.fold(f64::NEG_INFINITY, f64::max);
    Ok(UpcModel { turbine, pump, h_lo, h_hi })
}

fn fit_mode(samples: &[UpcSample], mode: Mode, degree: usize, envelope_degree: usize) -> Result<ModeCurve> {
    let rows: Vec<&UpcSample> = samples.iter().filter(|s| s.mode == mode).collect();
    let k = n_terms(degree);
    if rows.len() < k {
        return Err(Error::Fit { mode, reason: format!("{} samples, degree {degree} needs at least {k}", rows.len()) });
    }
    if rows.iter().any(|s| !(s.p_mw.is_finite() && s.h_m.is_finite() && s.q_m3s.is_finite())) {
        return Err(Error::Fit { mode, reason: "non-finite sample".into() });
    }
    let ps: Vec<f64> = rows.iter().map(|s| s.p_mw).collect();
    let hs: Vec<f64> = rows.iter().map(|s| s.h_m).collect();
    let qs: Vec<f64> = rows.iter().map(|s| s.q_m3s).collect();
    let (p_shift, p_scale) = centre_scale(&ps);
    let (h_shift, h_scale) = centre_scale(&hs);

    let design = DMatrix::from_fn(rows.len(), k, |i, j| {
        let (a, b) = term_powers(degree, j);
        ((ps[i] - p_shift) / p_scale).powi(a as i32) * ((hs[i] - h_shift) / h_scale).powi(b as i32)
    });
    let coeffs = least_squares(design, DVector::from_column_slice(&qs))
        .ok_or_else(|| Error::Fit { mode, reason: "design matrix is rank deficient".into() })?;
    let flow = BivariatePoly { degree, coeffs, p_shift, p_scale, h_shift, h_scale };

    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    let ss_tot: f64 = qs.iter().map(|q| (q - mean).powi(2)).sum();
    let ss_res: f64 = rows.iter().map(|s| (s.q_m3s - flow.eval(s.p_mw, s.h_m)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let (env_h, env_lo, env_hi) = envelope_points(&rows);
    let env_degree = envelope_degree.min(env_h.len().saturating_sub(1));
    let fit_env = |ys: &[f64]| {
        Poly1::fit(&env_h, ys, env_degree).map_err(|e| Error::Fit { mode, reason: e.to_string() })
    };
    Ok(ModeCurve { p_min: fit_env(&env_lo)?, p_max: fit_env(&env_hi)?, flow, r2 })
}

/// Per-head minimum and maximum sampled power. Heads are grouped exactly when
/// the samples lie on a grid, otherwise into 30 equal-width bins.
fn envelope_points(rows: &[&UpcSample]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut heads: Vec<f64> = rows.iter().map(|s| s.h_m).collect();
    heads.sort_by(f64::total_cmp);
    heads.dedup();
    let key: Box<dyn Fn(f64) -> usize> = if heads.len() <= 200 {
        let heads = heads.clone();
        Box::new(move |h| heads.partition_point(|&x| x < h))
    } else {
        let (lo, hi) = (heads[0], heads[heads.len() - 1]);
        Box::new(move |h| (((h - lo) / (hi - lo) * 30.0) as usize).min(29))
    };
    let n = if heads.len() <= 200 { heads.len() } else { 30 };
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut hsum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for s in rows {
        let i = key(s.h_m);
        lo[i] = lo[i].min(s.p_mw);
        hi[i] = hi[i].max(s.p_mw);
        hsum[i] += s.h_m;
        count[i] += 1;
    }
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        if count[i] > 0 {
            out.0.push(hsum[i] / count[i] as f64);
            out.1.push(lo[i]);
            out.2.push(hi[i]);
        }
    }
    out
}

/// `(a, b)` exponents of the `j`-th coefficient.
pub fn term_powers(degree: usize, j: usize) -> (usize, usize) {
    let mut k = j;
    for a in 0..=degree {
        let len = degree - a + 1;
        if k < len {
            return (a, k);
        }
        k -= len;
    }
    panic!("term index {j} out of range for degree {degree}")
}

fn centre_scale(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * (hi - lo);
    (0.5 * (hi + lo), if half > 0.0 { half } else { 1.0 })
}

fn least_squares(design: DMatrix<f64>, y: DVector<f64>) -> Option<Vec<f64>> {
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return None;
    }
    svd.solve(&y, 0.0).ok().map(|x| x.as_slice().to_vec())
}

pub fn write_samples(path: &Path, samples: &[UpcSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    for s in samples {
        w.serialize(s).map_err(|e| Error::io(path, csv_io(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: &Path) -> Result<Vec<UpcSample>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    let headers = r.headers().map_err(|e| Error::io(path, csv_io(e)))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["mode", "p_mw", "h_m", "q_m3s"] {
        return Err(Error::Parse { path: path.display().to_string(), line: 1, msg: "expected header mode,p_mw,h_m,q_m3s".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<UpcSample>().enumerate() {
        let s = rec.map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, msg: e.to_string() })?;
        out.push(s);
    }
    Ok(out)
}

pub(crate) fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}
