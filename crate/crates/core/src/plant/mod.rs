//! Plant physics: configuration, performance curves, reservoir geometry.

pub mod config;
pub mod geometry;
pub mod synth;
pub mod upc;

use serde::{Deserialize, Serialize};

pub use config::PlantConfig;
pub use geometry::{invert_v_low, v_low, v_up, Geometry};
pub use synth::{synth_upc_dataset, SynthUpcSpec};
pub use upc::{upc_fit, BivariatePoly, ModeCurve, Poly1, UpcModel, UpcSample};

use crate::error::{Error, Result};

/// Powers with magnitude below this are treated as idle.
pub const IDLE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Idle,
    Turbine,
    Pump,
}

impl Mode {
    pub fn from_power(p: f64) -> Mode {
        if p.abs() < IDLE_EPS {
            Mode::Idle
        } else if p > 0.0 {
            Mode::Turbine
        } else {
            Mode::Pump
        }
    }

    pub fn is_active(self) -> bool {
        self != Mode::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    WarmStart,
    Refined,
    Simulated,
}

/// Hourly schedule with its hydraulic state.
///
/// `head[t]` is the head at the start of hour `t`, the one the flow is
/// evaluated at; `volume[t]` is the lower-reservoir volume at the end of hour `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub power: Vec<f64>,
    pub flow: Vec<f64>,
    pub head: Vec<f64>,
    pub volume: Vec<f64>,
    pub mode: Vec<Mode>,
    pub role: Role,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.power.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.power.len();
        if [self.flow.len(), self.head.len(), self.volume.len(), self.mode.len()].iter().any(|&l| l != n) {
            return Err(Error::Validation("trajectory columns differ in length".into()));
        }
        for t in 0..n {
            let (p, q) = (self.power[t], self.flow[t]);
            let ok = match self.mode[t] {
                Mode::Idle => p == 0.0 && q == 0.0,
                Mode::Turbine => p > 0.0,
                Mode::Pump => p < 0.0,
            };
            if !ok {
                return Err(Error::Validation(format!("hour {t}: {:?} with p = {p}, q = {q}", self.mode[t])));
            }
        }
        Ok(())
    }
}

/// Plant configuration with its fitted surrogate and derived geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub config: PlantConfig,
    pub upc: UpcModel,
    pub geometry: Geometry,
}

impl Plant {
    pub fn new(config: PlantConfig, upc: UpcModel) -> Result<Self> {
        config.validate()?;
        let geometry = Geometry::new(&config)?;
        upc.validate(50)?;
        Ok(Plant { config, upc, geometry })
    }

    /// Reference site with a degree-5 fit of the default synthetic dataset.
    pub fn reference() -> Result<Self> {
        let config = PlantConfig::reference();
        let samples = synth_upc_dataset(&config, &SynthUpcSpec::default())?;
        let upc = upc_fit(&samples, 5)?;
        Plant::new(config, upc)
    }

    /// Lower volumes whose gross head stays inside `[h_min, h_max]`.
    pub fn volume_bounds(&self) -> (f64, f64) {
        (self.geometry.v_min, self.geometry.v_max)
    }

    /// Gross head at lower volume `v`.
    pub fn gross_head(&self, v: f64) -> Result<f64> {
        let c = &self.config;
        if !(0.0..=c.v_total).contains(&v) || v > self.geometry.lower_capacity || c.v_total - v > c.v_up_cap {
            return Err(Error::Domain(format!("lower volume {v} cannot be split between the reservoirs")));
        }
        let h = self.head_derivs(v).0;
        let tol = 1e-9 * c.h_max;
        if h < c.h_min - tol || h > c.h_max + tol {
            return Err(Error::BoundViolation(format!("head {h:.4} m at volume {v:.1} m³ outside [{}, {}]", c.h_min, c.h_max)));
        }
        Ok(h)
    }

    /// Gross head without range checks, pinned to `h_init` at the initial volume.
    pub fn head_at(&self, v: f64) -> f64 {
        if v == self.config.v_init {
            self.config.h_init
        } else {
            self.head_derivs(v).0
        }
    }

    /// Head with first and second derivative in volume; no range checks.
    pub fn head_derivs(&self, v: f64) -> (f64, f64, f64) {
        let (h, dh, d2h) = self.geometry.raw_head(v, &self.config);
        (h + self.geometry.head_offset, dh, d2h)
    }

    /// Lower volume at gross head `h`, with `dv/dh` and `d²v/dh²`.
    pub fn volume_at_head(&self, h: f64) -> Result<(f64, f64, f64)> {
        let c = &self.config;
        let tol = 1e-9 * c.h_max;
        if !(c.h_min - tol..=c.h_max + tol).contains(&h) {
            return Err(Error::Domain(format!("head {h} outside [{}, {}]", c.h_min, c.h_max)));
        }
        let (lo, hi) = self.volume_bounds();
        let v = geometry::invert_increasing(
            |v| {
                let (hv, dh, _) = self.head_derivs(v);
                (-hv, -dh)
            },
            -h,
            lo,
            hi,
        );
        let (_, dh, d2h) = self.head_derivs(v);
        Ok((v, 1.0 / dh, -d2h / dh.powi(3)))
    }

    /// The all-idle trajectory from the initial state.
    pub fn idle_trajectory(&self, horizon: usize) -> Trajectory {
        Trajectory {
            power: vec![0.0; horizon],
            flow: vec![0.0; horizon],
            head: vec![self.config.h_init; horizon],
            volume: vec![self.config.v_init; horizon],
            mode: vec![Mode::Idle; horizon],
            role: Role::Simulated,
        }
    }
}
