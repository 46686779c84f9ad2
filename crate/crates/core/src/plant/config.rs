use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static plant parameters.
///
/// Volumes are in m³, heads in m, `dt` in seconds. Prices are per MWh, so the
/// currency-side time step is `dt / 3600` hours (see [`PlantConfig::dt_hours`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub h_init: f64,
    /// Initial lower-reservoir volume.
    pub v_init: f64,
    /// Terminal lower-reservoir volume that must not be exceeded.
    pub v_target: f64,
    /// Water shared by both reservoirs, `v_up + v_low = v_total`.
    pub v_total: f64,
    pub v_low_cap: f64,
    pub v_up_cap: f64,
    /// Quadratic operating cost, currency per MW² per hour.
    pub c_op: f64,
    pub dt: f64,
    /// Frustum side slope of the upper reservoir.
    pub slope_m: f64,
    pub r_base: f64,
    pub n_pits: u32,
    pub pit_radius: f64,
    pub rho: f64,
    pub g: f64,
    /// Conversion efficiency used to price surplus water at the horizon end.
    pub eta_ref: f64,
}

/// Lower capacity, slope and pit count of the reference site.
const REFERENCE_CAPACITY: f64 = 588_000.0;
const REFERENCE_SLOPE: f64 = 1.8;
const REFERENCE_PITS: u32 = 100;
/// Fill height at which the upper frustum reaches its capacity.
const REFERENCE_UPPER_FILL: f64 = 30.0;

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig::reference()
    }
}

impl PlantConfig {
    /// The reference site: 50–99 m head, two 588 000 m³ reservoirs at half fill,
    /// 100 spherical pits below and a 1.8-slope frustum above.
    pub fn reference() -> Self {
        let pit_radius = pit_radius_for_capacity(REFERENCE_CAPACITY, REFERENCE_PITS);
        let r_base = base_radius_for_capacity(REFERENCE_CAPACITY, REFERENCE_UPPER_FILL, REFERENCE_SLOPE);
        PlantConfig {
            h_min: 50.0,
            h_max: 99.0,
            h_init: 78.0,
            v_init: 0.5 * REFERENCE_CAPACITY,
            v_target: 0.5 * REFERENCE_CAPACITY,
            v_total: REFERENCE_CAPACITY,
            v_low_cap: REFERENCE_CAPACITY,
            v_up_cap: REFERENCE_CAPACITY,
            c_op: 0.4,
            dt: 3600.0,
            slope_m: REFERENCE_SLOPE,
            r_base,
            n_pits: REFERENCE_PITS,
            pit_radius,
            rho: 1000.0,
            g: 9.81,
            eta_ref: 0.9,
        }
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt / 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let finite = [
            self.h_min, self.h_max, self.h_init, self.v_init, self.v_target, self.v_total, self.v_low_cap,
            self.v_up_cap, self.c_op, self.dt, self.slope_m, self.r_base, self.pit_radius, self.rho, self.g,
            self.eta_ref,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return fail("non-finite parameter".into());
        }
        if !(0.0 < self.h_min && self.h_min < self.h_max) {
            return fail(format!("need 0 < h_min < h_max, got {} / {}", self.h_min, self.h_max));
        }
        if !(self.h_min..=self.h_max).contains(&self.h_init) {
            return fail(format!("h_init {} outside [{}, {}]", self.h_init, self.h_min, self.h_max));
        }
        if !(0.0..=self.v_total).contains(&self.v_init) {
            return fail(format!("v_init {} outside [0, v_total]", self.v_init));
        }
        if !(self.v_target > 0.0 && self.v_target <= self.v_total) {
            return fail(format!("v_target {} outside (0, v_total]", self.v_target));
        }
        if self.dt <= 0.0 || self.c_op < 0.0 {
            return fail("need dt > 0 and c_op >= 0".into());
        }
        if self.n_pits == 0 || self.pit_radius <= 0.0 || self.r_base <= 0.0 || self.slope_m < 0.0 {
            return fail("reservoir geometry must be positive".into());
        }
        if self.rho <= 0.0 || self.g <= 0.0 || !(0.0 < self.eta_ref && self.eta_ref <= 1.0) {
            return fail("physical constants out of range".into());
        }
        let pits = self.n_pits as f64 * 4.0 / 3.0 * PI * self.pit_radius.powi(3);
        if ((pits - self.v_low_cap) / self.v_low_cap).abs() > 1e-6 {
            return fail(format!(
                "pit geometry holds {pits:.3} m³ but v_low_cap is {:.3} m³",
                self.v_low_cap
            ));
        }
        if self.v_total > self.v_low_cap + self.v_up_cap {
            return fail("v_total exceeds combined reservoir capacity".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PlantConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.span().map(|s| 1 + text[..s.start].matches('\n').count()).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Radius of `n` full spheres holding `capacity` together.
pub fn pit_radius_for_capacity(capacity: f64, n: u32) -> f64 {
    (3.0 * capacity / (4.0 * PI * n as f64)).cbrt()
}

/// Base radius of a frustum with side slope `m` that holds `capacity` at fill
/// height `fill`. Positive root of the quadratic in `r`.
pub fn base_radius_for_capacity(capacity: f64, fill: f64, m: f64) -> f64 {
    let a = PI * fill;
    let b = PI * m * fill * fill;
    let c = PI * m * m / 3.0 * fill.powi(3) - capacity;
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}
