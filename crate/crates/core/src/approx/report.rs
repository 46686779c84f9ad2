use std::path::Path;

use serde::{Deserialize, Serialize};

use super::global::GlobalLinearModel;
use super::sos2::Sos2Grid;
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant};

/// Operating point at which approximation error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub mode: Mode,
    pub p: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Mean absolute error relative to the mean absolute truth.
    pub mean_pct: f64,
    /// Largest pointwise relative error.
    pub max_pct: f64,
    /// Mean pointwise relative error.
    pub mape_pct: f64,
    pub r2: f64,
}

impl ErrorMetrics {
    pub fn from_pairs(truth: &[f64], approx: &[f64]) -> Result<Self> {
        if truth.is_empty() || truth.len() != approx.len() {
            return Err(Error::InvalidArgument(format!("{} truths vs {} approximations", truth.len(), approx.len())));
        }
        let n = truth.len() as f64;
        let mean_abs = truth.iter().map(|y| y.abs()).sum::<f64>() / n;
        if mean_abs == 0.0 {
            return Err(Error::InvalidArgument("truth is identically zero".into()));
        }
        let floor = 1e-6 * mean_abs;
        let mean_y = truth.iter().sum::<f64>() / n;
        let (mut abs_err, mut max_rel, mut sum_rel, mut ss_res, mut ss_tot) = (0.0, 0.0f64, 0.0, 0.0, 0.0);
        for (&y, &a) in truth.iter().zip(approx) {
            let e = (a - y).abs();
            let rel = e / y.abs().max(floor);
            abs_err += e;
            max_rel = max_rel.max(rel);
            sum_rel += rel;
            ss_res += e * e;
            ss_tot += (y - mean_y).powi(2);
        }
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        Ok(ErrorMetrics { mean_pct: 100.0 * abs_err / n / mean_abs, max_pct: 100.0 * max_rel, mape_pct: 100.0 * sum_rel / n, r2 })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Approximation<'a> {
    Global(&'a GlobalLinearModel),
    Piecewise(&'a Sos2Grid),
}

impl Approximation<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Approximation::Global(_) => "global_linear",
            Approximation::Piecewise(_) => "piecewise_bilinear",
        }
    }

    /// Flow surrogate; piecewise evaluation clamps power into the interpolated hull.
    pub fn flow(&self, mode: Mode, p: f64, h: f64) -> Result<f64> {
        match self {
            Approximation::Global(g) => Ok(g.mode(mode)?.flow(p, h)),
            Approximation::Piecewise(grid) => {
                let (lo, hi) = grid.power_hull(mode, h)?;
                grid.interpolate(mode, h, p.clamp(lo, hi))
            }
        }
    }

    pub fn volume(&self, h: f64) -> Result<f64> {
        match self {
            Approximation::Global(g) => Ok(g.volume(h)),
            Approximation::Piecewise(grid) => grid.volume(h),
        }
    }
}

/// Error of the flow surrogate over the active points.
pub fn upc_error(plant: &Plant, approx: Approximation<'_>, points: &[OperatingPoint]) -> Result<ErrorMetrics> {
    let (mut truth, mut est) = (Vec::new(), Vec::new());
    for pt in points.iter().filter(|pt| pt.mode.is_active()) {
        truth.push(plant.upc.flow(pt.mode, pt.p, pt.h)?);
        est.push(approx.flow(pt.mode, pt.p, pt.h)?);
    }
    ErrorMetrics::from_pairs(&truth, &est)
}

/// Error of the volume-from-head surrogate over the heads of all points.
pub fn vol_error(plant: &Plant, approx: Approximation<'_>, points: &[OperatingPoint]) -> Result<ErrorMetrics> {
    let (mut truth, mut est) = (Vec::with_capacity(points.len()), Vec::with_capacity(points.len()));
    for pt in points {
        truth.push(plant.volume_at_head(pt.h)?.0);
        est.push(approx.volume(pt.h)?);
    }
    ErrorMetrics::from_pairs(&truth, &est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub function: String,
    pub method: String,
    pub mean_pct: f64,
    pub max_pct: f64,
    pub mape_pct: f64,
    pub r2: f64,
}

/// Four rows: flow and volume, each under the piecewise and the global surrogate.
pub fn approx_error_report(
    plant: &Plant,
    global: &GlobalLinearModel,
    grid: &Sos2Grid,
    points: &[OperatingPoint],
) -> Result<Vec<ErrorRow>> {
    let mut rows = Vec::with_capacity(4);
    for (function, vol) in [("upc", false), ("vol", true)] {
        for approx in [Approximation::Piecewise(grid), Approximation::Global(global)] {
            let m = if vol { vol_error(plant, approx, points)? } else { upc_error(plant, approx, points)? };
            rows.push(ErrorRow {
                function: function.into(),
                method: approx.name().into(),
                mean_pct: m.mean_pct,
                max_pct: m.max_pct,
                mape_pct: m.mape_pct,
                r2: m.r2,
            });
        }
    }
    Ok(rows)
}

pub fn write_error_report(path: &Path, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io { path: path.into(), source: e.into() })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io { path: path.into(), source: e.into() })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
