use serde::{Deserialize, Serialize};

use super::global::{admissible_heads, linspace};
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant};

/// Knots of one mode: `powers[i][j]` and `flows[i][j]` at head knot `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    pub powers: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
}

impl ModeTable {
    pub fn n_powers(&self) -> usize {
        self.powers.first().map_or(0, Vec::len)
    }
}

/// Interpolation grid behind the piecewise-bilinear formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos2Grid {
    pub heads: Vec<f64>,
    /// Lower volume at each head knot.
    pub volumes: Vec<f64>,
    pub turbine: ModeTable,
    pub pump: ModeTable,
}

/// Nonzero interpolation weight on knot `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotWeight {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

pub fn build_sos2_grid(plant: &Plant, n_heads: usize, n_turbine: usize, n_pump: usize) -> Result<Sos2Grid> {
    if n_heads < 2 || n_turbine < 2 || n_pump < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 knots per axis, got {n_heads}/{n_turbine}/{n_pump}"
        )));
    }
    let (h_lo, h_hi) = admissible_heads(plant);
    let heads = linspace(h_lo, h_hi, n_heads);
    let volumes = heads.iter().map(|&h| plant.volume_at_head(h).map(|v| v.0)).collect::<Result<Vec<_>>>()?;
    let table = |mode: Mode, n: usize| -> Result<ModeTable> {
        let mut powers = Vec::with_capacity(n_heads);
        let mut flows = Vec::with_capacity(n_heads);
        for &h in &heads {
            let (lo, hi) = plant.upc.envelope(mode, h)?;
            let row = linspace(lo, hi, n);
            flows.push(row.iter().map(|&p| plant.upc.flow(mode, p, h)).collect::<Result<Vec<_>>>()?);
            powers.push(row);
        }
        Ok(ModeTable { powers, flows })
    };
    Ok(Sos2Grid { turbine: table(Mode::Turbine, n_turbine)?, pump: table(Mode::Pump, n_pump)?, heads, volumes })
}

impl Sos2Grid {
    pub fn table(&self, mode: Mode) -> Result<&ModeTable> {
        match mode {
            Mode::Turbine => Ok(&self.turbine),
            Mode::Pump => Ok(&self.pump),
            Mode::Idle => Err(Error::InvalidArgument("idle mode has no interpolation table".into())),
        }
    }

    /// Interpolation weights `Ω` over the horizon: `horizon · N_h · (N_p^T + N_p^P)`.
    pub fn weight_count(&self, horizon: usize) -> usize {
        let n_h = self.heads.len();
        horizon * (n_h * self.turbine.n_powers() + n_h * self.pump.n_powers())
    }

    /// Head cell and fractional position `s` inside it.
    fn head_cell(&self, h: f64) -> Result<(usize, f64)> {
        let n = self.heads.len();
        let (lo, hi) = (self.heads[0], self.heads[n - 1]);
        let tol = 1e-9 * (1.0 + hi.abs());
        if !(lo - tol..=hi + tol).contains(&h) {
            return Err(Error::Domain(format!("head {h} outside grid [{lo}, {hi}]")));
        }
        let h = h.clamp(lo, hi);
        let i = self.heads.partition_point(|&x| x <= h).clamp(1, n - 1) - 1;
        Ok((i, (h - self.heads[i]) / (self.heads[i + 1] - self.heads[i])))
    }

    /// Interpolated power envelope at head `h`.
    pub fn power_hull(&self, mode: Mode, h: f64) -> Result<(f64, f64)> {
        let t = self.table(mode)?;
        let (i, s) = self.head_cell(h)?;
        let last = t.n_powers() - 1;
        let lo = (1.0 - s) * t.powers[i][0] + s * t.powers[i + 1][0];
        let hi = (1.0 - s) * t.powers[i][last] + s * t.powers[i + 1][last];
        Ok((lo, hi))
    }

    /// The four bilinear weights selecting `(h, p)`; zero weights are dropped.
    pub fn cell_weights(&self, mode: Mode, h: f64, p: f64) -> Result<Vec<KnotWeight>> {
        let t = self.table(mode)?;
        let (i, s) = self.head_cell(h)?;
        let (lo, hi) = self.power_hull(mode, h)?;
        let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if p < lo - tol || p > hi + tol {
            return Err(Error::Domain(format!("power {p} outside grid hull [{lo}, {hi}] at head {h}")));
        }
        let last = t.n_powers() - 1;
        let u = if hi > lo { ((p - lo) / (hi - lo)).clamp(0.0, 1.0) * last as f64 } else { 0.0 };
        let j = (u.floor() as usize).min(last - 1);
        let r = u - j as f64;
        let mut out = Vec::with_capacity(4);
        for (di, ws) in [(0, 1.0 - s), (1, s)] {
            for (dj, wr) in [(0, 1.0 - r), (1, r)] {
                let w = ws * wr;
                if w != 0.0 {
                    out.push(KnotWeight { i: i + di, j: j + dj, w });
                }
            }
        }
        Ok(out)
    }

    /// Bilinear flow at `(h, p)`.
    pub fn interpolate(&self, mode: Mode, h: f64, p: f64) -> Result<f64> {
        let t = self.table(mode)?;
        Ok(self.cell_weights(mode, h, p)?.iter().map(|k| k.w * t.flows[k.i][k.j]).sum())
    }

    /// Piecewise-linear volume at head `h`.
    pub fn volume(&self, h: f64) -> Result<f64> {
        let (i, s) = self.head_cell(h)?;
        Ok((1.0 - s) * self.volumes[i] + s * self.volumes[i + 1])
    }
}

/// Bilinear flow on the containing cell; `(h, p)` must lie inside the grid hull.
pub fn sos2_interpolate(grid: &Sos2Grid, h: f64, p: f64, mode: Mode) -> Result<f64> {
    grid.interpolate(mode, h, p)
}
