//! Deterministic stand-in for laboratory pump-turbine measurements.
//!
//! Flows follow from hydraulic power balance with a smooth, concave efficiency
//! surface peaking mid-envelope. The power envelope comes from rated-flow
//! limits: turbine flow grows like `sqrt(h)`, pump flow shrinks like `1/sqrt(h)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::PlantConfig;
use super::upc::UpcSample;
use super::Mode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUpcSpec {
    pub n_heads: usize,
    pub n_powers: usize,
    /// Turbine flow limit at `ref_head`, m³/s.
    pub rated_flow: f64,
    pub ref_head: f64,
    /// Efficiency used to turn flow limits into power limits.
    pub eta_nominal: f64,
    pub eta_peak: f64,
    pub eta_drop: f64,
    pub eta_floor: f64,
    pub turbine_min_fraction: f64,
    pub pump_max_fraction: f64,
    pub pump_min_fraction: f64,
    /// Relative Gaussian measurement noise on flow; zero gives exact samples.
    pub noise_rel: f64,
    pub seed: u64,
}

impl Default for SynthUpcSpec {
    fn default() -> Self {
        SynthUpcSpec {
            n_heads: 25,
            n_powers: 25,
            rated_flow: 15.0,
            ref_head: 75.0,
            eta_nominal: 0.9,
            eta_peak: 0.93,
            eta_drop: 0.10,
            eta_floor: 0.80,
            turbine_min_fraction: 0.3,
            pump_max_fraction: 0.9,
            pump_min_fraction: 0.5,
            noise_rel: 0.0,
            seed: 7,
        }
    }
}

/// Turbine discharge for power `p` (MW) at head `h` and efficiency `eta`.
pub fn turbine_flow(p: f64, h: f64, eta: f64, cfg: &PlantConfig) -> f64 {
    p * 1e6 / (eta * cfg.rho * cfg.g * h)
}

/// Pump discharge (negative) for absorbed power `p` (MW, sign ignored).
pub fn pump_flow(p: f64, h: f64, eta: f64, cfg: &PlantConfig) -> f64 {
    -p.abs() * 1e6 * eta / (cfg.rho * cfg.g * h)
}

impl SynthUpcSpec {
    /// Power envelope `(p_min, p_max)` of the generator at head `h`.
    pub fn envelope(&self, mode: Mode, h: f64, cfg: &PlantConfig) -> (f64, f64) {
        let hydraulic = cfg.rho * cfg.g * h / 1e6;
        match mode {
            Mode::Turbine => {
                let q_max = self.rated_flow * (h / self.ref_head).sqrt();
                let hi = self.eta_nominal * hydraulic * q_max;
                (self.turbine_min_fraction * hi, hi)
            }
            Mode::Pump => {
                let q_max = self.pump_max_fraction * self.rated_flow * (self.ref_head / h).sqrt();
                let lo = -hydraulic * q_max / self.eta_nominal;
                (lo, self.pump_min_fraction * lo)
            }
            Mode::Idle => (0.0, 0.0),
        }
    }

    /// Efficiency at `p` given the envelope at the same head.
    pub fn efficiency(&self, p: f64, envelope: (f64, f64)) -> f64 {
        let centre = 0.5 * (envelope.0.abs() + envelope.1.abs());
        let rel = (p.abs() - centre) / centre;
        (self.eta_peak - self.eta_drop * rel * rel).clamp(self.eta_floor, self.eta_peak)
    }

    /// Exact generator flow at `(p, h)`.
    pub fn flow(&self, mode: Mode, p: f64, h: f64, cfg: &PlantConfig) -> f64 {
        let env = self.envelope(mode, h, cfg);
        let eta = self.efficiency(p, env);
        match mode {
            Mode::Turbine => turbine_flow(p, h, eta, cfg),
            Mode::Pump => pump_flow(p, h, eta, cfg),
            Mode::Idle => 0.0,
        }
    }
}

/// Grid samples over `[h_min, h_max]` × envelope for both active modes.
pub fn synth_upc_dataset(cfg: &PlantConfig, spec: &SynthUpcSpec) -> Result<Vec<UpcSample>> {
    if spec.n_heads < 2 || spec.n_powers < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 2 points per axis, got {}x{}",
            spec.n_heads, spec.n_powers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_rel.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(2 * spec.n_heads * spec.n_powers);
    for mode in [Mode::Turbine, Mode::Pump] {
        for i in 0..spec.n_heads {
            let h = cfg.h_min + (cfg.h_max - cfg.h_min) * i as f64 / (spec.n_heads - 1) as f64;
            let (lo, hi) = spec.envelope(mode, h, cfg);
            for j in 0..spec.n_powers {
                let p = lo + (hi - lo) * j as f64 / (spec.n_powers - 1) as f64;
                let mut q = spec.flow(mode, p, h, cfg);
                if spec.noise_rel > 0.0 {
                    q *= 1.0 + noise.sample(&mut rng);
                }
                out.push(UpcSample { mode, p_mw: p, h_m: h, q_m3s: q });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_flows() {
        let cfg = PlantConfig::reference();
        let qt = turbine_flow(10.0, 75.0, 0.9, &cfg);
        assert!((qt - 1e7 / (0.9 * 1000.0 * 9.81 * 75.0)).abs() < 1e-12);
        assert!((qt - 15.10).abs() < 0.005);
        let qp = pump_flow(-10.0, 75.0, 0.9, &cfg);
        assert!((qp + 12.23).abs() < 0.005);
    }

    #[test]
    fn degenerate_grid_rejected() {
        let cfg = PlantConfig::reference();
        let spec = SynthUpcSpec { n_heads: 1, ..Default::default() };
        assert!(synth_upc_dataset(&cfg, &spec).is_err());
        let spec = SynthUpcSpec { n_powers: 1, ..Default::default() };
        assert!(synth_upc_dataset(&cfg, &spec).is_err());
    }

    #[test]
    fn efficiency_stays_in_band() {
        let cfg = PlantConfig::reference();
        let spec = SynthUpcSpec::default();
        for s in synth_upc_dataset(&cfg, &spec).unwrap() {
            let env = spec.envelope(s.mode, s.h_m, &cfg);
            let eta = spec.efficiency(s.p_mw, env);
            assert!((0.80..=0.93).contains(&eta));
            assert_eq!(s.q_m3s.signum(), s.p_mw.signum());
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let cfg = PlantConfig::reference();
        let spec = SynthUpcSpec { noise_rel: 1e-3, seed: 11, ..Default::default() };
        let a = synth_upc_dataset(&cfg, &spec).unwrap();
        let b = synth_upc_dataset(&cfg, &spec).unwrap();
        assert_eq!(a, b);
    }
}
