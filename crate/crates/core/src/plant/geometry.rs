//! Reservoir volume–height relations and the gross head they imply.
//!
//! The upper reservoir is a frustum, the lower one `n` identical spherical
//! pits. Both fill curves are cubic and strictly increasing on their fill
//! range, so every inverse is found with a bracketed Newton iteration.

use std::f64::consts::PI;

use super::config::PlantConfig;
use crate::error::{Error, Result};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_RESIDUAL_TOL: f64 = 1e-10;

/// Upper-reservoir volume at fill height `h_up`.
pub fn v_up(h_up: f64, cfg: &PlantConfig) -> Result<f64> {
    let limit = upper_fill_limit(cfg);
    if !(0.0..=limit * (1.0 + 1e-12)).contains(&h_up) {
        return Err(Error::Domain(format!("upper fill height {h_up} outside [0, {limit}]")));
    }
    Ok(v_up_raw(h_up, cfg).0)
}

/// Lower-reservoir volume at pit fill height `h_low`.
pub fn v_low(h_low: f64, cfg: &PlantConfig) -> Result<f64> {
    let top = 2.0 * cfg.pit_radius;
    if !(0.0..=top).contains(&h_low) {
        return Err(Error::Domain(format!("lower fill height {h_low} outside [0, {top}]")));
    }
    Ok(v_low_raw(h_low, cfg).0)
}

/// Pit fill height holding lower volume `v`.
pub fn invert_v_low(v: f64, cfg: &PlantConfig) -> Result<f64> {
    let cap = lower_capacity(cfg);
    if !(0.0..=cap * (1.0 + 1e-12)).contains(&v) {
        return Err(Error::Domain(format!("lower volume {v} outside [0, {cap}]")));
    }
    Ok(invert_v_low_raw(v.min(cap), cfg))
}

/// Frustum fill height holding upper volume `v`.
pub fn invert_v_up(v: f64, cfg: &PlantConfig) -> Result<f64> {
    if !(0.0..=cfg.v_up_cap * (1.0 + 1e-12)).contains(&v) {
        return Err(Error::Domain(format!("upper volume {v} outside [0, {}]", cfg.v_up_cap)));
    }
    Ok(invert_v_up_raw(v, cfg))
}

pub fn lower_capacity(cfg: &PlantConfig) -> f64 {
    cfg.n_pits as f64 * 4.0 / 3.0 * PI * cfg.pit_radius.powi(3)
}

/// Fill height at which the frustum holds `v_up_cap`.
pub fn upper_fill_limit(cfg: &PlantConfig) -> f64 {
    invert_v_up_raw(cfg.v_up_cap, cfg)
}

/// (value, first, second derivative) of the frustum volume.
pub(crate) fn v_up_raw(h: f64, cfg: &PlantConfig) -> (f64, f64, f64) {
    let (r, m) = (cfg.r_base, cfg.slope_m);
    let v = PI * r * r * h + PI * m * r * h * h + PI * m * m / 3.0 * h.powi(3);
    let dv = PI * r * r + 2.0 * PI * m * r * h + PI * m * m * h * h;
    let d2v = 2.0 * PI * m * r + 2.0 * PI * m * m * h;
    (v, dv, d2v)
}

/// (value, first, second derivative) of the spherical-pit volume.
pub(crate) fn v_low_raw(h: f64, cfg: &PlantConfig) -> (f64, f64, f64) {
    let n = cfg.n_pits as f64;
    let big_r = cfg.pit_radius;
    let v = n * PI * big_r * h * h - n * PI / 3.0 * h.powi(3);
    let dv = n * PI * (2.0 * big_r * h - h * h);
    let d2v = n * PI * (2.0 * big_r - 2.0 * h);
    (v, dv, d2v)
}

pub(crate) fn invert_v_low_raw(v: f64, cfg: &PlantConfig) -> f64 {
    let top = 2.0 * cfg.pit_radius;
    invert_increasing(|h| { let (f, df, _) = v_low_raw(h, cfg); (f, df) }, v, 0.0, top)
}

pub(crate) fn invert_v_up_raw(v: f64, cfg: &PlantConfig) -> f64 {
    // v_up grows at least linearly, so v / (π r²) bounds the root from above.
    let hi = v.max(0.0) / (PI * cfg.r_base * cfg.r_base) + 1.0;
    invert_increasing(|h| { let (f, df, _) = v_up_raw(h, cfg); (f, df) }, v, 0.0, hi)
}

/// Root of `f(x) = target` for `f` increasing on `[lo, hi]`: Newton steps that
/// stay inside the shrinking bracket, bisection otherwise.
pub(crate) fn invert_increasing(f: impl Fn(f64) -> (f64, f64), target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if target <= f_lo {
        return lo;
    }
    if target >= f_hi {
        return hi;
    }
    let mut x = lo + (hi - lo) * (target - f_lo) / (f_hi - f_lo);
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, dfx) = f(x);
        let r = fx - target;
        if r == 0.0 {
            return x;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - r / dfx;
        let next = if dfx > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - x).abs();
        x = next;
        if (r.abs() <= NEWTON_RESIDUAL_TOL && step <= 1e-12 * (1.0 + x.abs())) || step <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Derived geometry: the head datum and the head-admissible volume range.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub upper_fill_limit: f64,
    pub lower_capacity: f64,
    /// Datum shift making `gross_head(v_init) == h_init`.
    pub head_offset: f64,
    /// Smallest lower volume whose head does not exceed `h_max`.
    pub v_min: f64,
    /// Largest lower volume whose head does not fall below `h_min`.
    pub v_max: f64,
}

impl Geometry {
    pub fn new(cfg: &PlantConfig) -> Result<Self> {
        let upper_fill_limit = upper_fill_limit(cfg);
        let lower_capacity = lower_capacity(cfg);
        let dom_lo = (cfg.v_total - cfg.v_up_cap).max(0.0);
        let dom_hi = lower_capacity.min(cfg.v_total);
        if !(dom_lo..=dom_hi).contains(&cfg.v_init) {
            return Err(Error::Config("v_init leaves the upper reservoir over- or under-filled".into()));
        }
        let mut geo = Geometry { upper_fill_limit, lower_capacity, head_offset: 0.0, v_min: dom_lo, v_max: dom_hi };
        geo.head_offset = cfg.h_init - geo.raw_head(cfg.v_init, cfg).0;

        // head is decreasing in the lower volume
        let head = |v: f64| geo.raw_head(v, cfg).0 + geo.head_offset;
        let solve = |target: f64| {
            invert_increasing(
                |v| {
                    let (h, dh, _) = geo.raw_head(v, cfg);
                    (-(h + geo.head_offset), -dh)
                },
                -target,
                dom_lo,
                dom_hi,
            )
        };
        let v_min = if head(dom_lo) <= cfg.h_max { dom_lo } else { solve(cfg.h_max) };
        let v_max = if head(dom_hi) >= cfg.h_min { dom_hi } else { solve(cfg.h_min) };
        geo.v_min = v_min;
        geo.v_max = v_max;
        Ok(geo)
    }

    /// Head before the datum shift, with first and second derivative in `v`.
    pub(crate) fn raw_head(&self, v: f64, cfg: &PlantConfig) -> (f64, f64, f64) {
        let h_up = invert_v_up_raw(cfg.v_total - v, cfg);
        let h_low = invert_v_low_raw(v, cfg);
        let (_, du, d2u) = v_up_raw(h_up, cfg);
        let (_, dl, d2l) = v_low_raw(h_low, cfg);
        let h = h_up - h_low;
        let dh = -1.0 / du - 1.0 / dl;
        let d2h = -d2u / du.powi(3) + d2l / dl.powi(3);
        (h, dh, d2h)
    }
}
