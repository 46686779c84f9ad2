use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{Mode, Plant};

/// Affine surrogates of one active mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeAffine {
    /// Flow against `[p, h, 1]`.
    pub alpha: [f64; 3],
    /// Lower power bound against `[h, 1]`.
    pub beta_min: [f64; 2],
    /// Upper power bound against `[h, 1]`.
    pub beta_max: [f64; 2],
}

impl ModeAffine {
    pub fn flow(&self, p: f64, h: f64) -> f64 {
        self.alpha[0] * p + self.alpha[1] * h + self.alpha[2]
    }

    pub fn bounds(&self, h: f64) -> (f64, f64) {
        (self.beta_min[0] * h + self.beta_min[1], self.beta_max[0] * h + self.beta_max[1])
    }
}

/// One affine map per nonlinear relation, fitted over the whole operating domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalLinearModel {
    pub turbine: ModeAffine,
    pub pump: ModeAffine,
    /// Head against `[v_low, 1]`.
    pub delta: [f64; 2],
}

impl GlobalLinearModel {
    pub fn mode(&self, mode: Mode) -> Result<&ModeAffine> {
        match mode {
            Mode::Turbine => Ok(&self.turbine),
            Mode::Pump => Ok(&self.pump),
            Mode::Idle => Err(Error::InvalidArgument("idle mode has no affine surrogate".into())),
        }
    }

    pub fn head(&self, v: f64) -> f64 {
        self.delta[0] * v + self.delta[1]
    }

    /// Volume implied by the affine head map.
    pub fn volume(&self, h: f64) -> f64 {
        (h - self.delta[1]) / self.delta[0]
    }

    /// Envelope ordering on `[h_lo, h_hi]`; affine bounds only need checking at the ends.
    pub fn validate(&self, h_lo: f64, h_hi: f64) -> Result<()> {
        for h in [h_lo, h_hi] {
            let (tl, th) = self.turbine.bounds(h);
            let (pl, ph) = self.pump.bounds(h);
            if th < tl || pl > ph {
                return Err(Error::Validation(format!("affine envelope crosses at h = {h}")));
            }
        }
        Ok(())
    }
}

/// Grid density of the global fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalSampling {
    pub n_heads: usize,
    pub n_powers: usize,
    pub n_volumes: usize,
}

impl Default for GlobalSampling {
    fn default() -> Self {
        GlobalSampling { n_heads: 30, n_powers: 30, n_volumes: 30 }
    }
}

/// Head range reachable inside the admissible volume range.
pub fn admissible_heads(plant: &Plant) -> (f64, f64) {
    let (v_lo, v_hi) = plant.volume_bounds();
    let c = &plant.config;
    (plant.head_derivs(v_hi).0.max(c.h_min), plant.head_derivs(v_lo).0.min(c.h_max))
}

pub fn fit_global(plant: &Plant, sampling: GlobalSampling) -> Result<GlobalLinearModel> {
    if sampling.n_heads < 3 || sampling.n_powers < 3 || sampling.n_volumes < 3 {
        return Err(Error::Regression(format!("global fit needs at least 3 samples per axis, got {sampling:?}")));
    }
    let (h_lo, h_hi) = admissible_heads(plant);
    let heads: Vec<f64> = linspace(h_lo, h_hi, sampling.n_heads);

    let fit_mode = |mode: Mode| -> Result<ModeAffine> {
        let mut rows = Vec::new();
        let mut lo_rows = Vec::new();
        for &h in &heads {
            let (lo, hi) = plant.upc.envelope(mode, h)?;
            lo_rows.push((h, lo, hi));
            for p in linspace(lo, hi, sampling.n_powers) {
                rows.push(([p, h, 1.0], plant.upc.flow(mode, p, h)?));
            }
        }
        let alpha = solve_ls(&rows)?;
        let beta_min = solve_ls(&lo_rows.iter().map(|&(h, lo, _)| ([h, 1.0], lo)).collect::<Vec<_>>())?;
        let beta_max = solve_ls(&lo_rows.iter().map(|&(h, _, hi)| ([h, 1.0], hi)).collect::<Vec<_>>())?;
        Ok(ModeAffine { alpha, beta_min, beta_max })
    };

    let (v_lo, v_hi) = plant.volume_bounds();
    let vol_rows: Vec<([f64; 2], f64)> =
        linspace(v_lo, v_hi, sampling.n_volumes).into_iter().map(|v| ([v, 1.0], plant.head_derivs(v).0)).collect();
    let model = GlobalLinearModel { turbine: fit_mode(Mode::Turbine)?, pump: fit_mode(Mode::Pump)?, delta: solve_ls(&vol_rows)? };
    model.validate(h_lo, h_hi)?;
    Ok(model)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn solve_ls<const K: usize>(rows: &[([f64; K], f64)]) -> Result<[f64; K]> {
    if rows.len() < K {
        return Err(Error::Regression(format!("{} samples for {K} coefficients", rows.len())));
    }
    // column equilibration keeps volume-scale regressors comparable to the constant
    let mut scale = [0.0f64; K];
    for (x, _) in rows {
        for k in 0..K {
            scale[k] = scale[k].max(x[k].abs());
        }
    }
    if scale.contains(&0.0) {
        return Err(Error::Regression("regressor column is identically zero".into()));
    }
    let a = DMatrix::from_fn(rows.len(), K, |i, j| rows[i].0[j] / scale[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::Regression("degenerate sampling: design matrix is rank deficient".into()));
    }
    let x = svd.solve(&y, 0.0).map_err(|e| Error::Regression(e.to_string()))?;
    let mut out = [0.0; K];
    for k in 0..K {
        out[k] = x[k] / scale[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{BivariatePoly, ModeCurve, PlantConfig, Poly1, UpcModel};

    fn affine_plant() -> Plant {
        let reference = Plant::reference().unwrap();
        // degree 1 coefficients: [c00, c01, c10] → q = 1 + 3h + 2p
        let flow = BivariatePoly::from_monomials(1, vec![1.0, 3.0, 2.0]).unwrap();
        let upc = UpcModel {
            turbine: ModeCurve { flow: flow.clone(), ..reference.upc.turbine.clone() },
            pump: ModeCurve { flow, ..reference.upc.pump.clone() },
            ..reference.upc
        };
        Plant::new(PlantConfig::reference(), upc).unwrap()
    }

    #[test]
    fn affine_curve_recovered_exactly() {
        let plant = affine_plant();
        let g = fit_global(&plant, GlobalSampling::default()).unwrap();
        for (got, want) in g.turbine.alpha.iter().zip([2.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_envelope_is_recovered() {
        let mut plant = affine_plant();
        plant.upc.turbine.p_min = Poly1::constant(2.0);
        plant.upc.turbine.p_max = Poly1::constant(9.0);
        let g = fit_global(&plant, GlobalSampling::default()).unwrap();
        assert!(g.turbine.beta_min[0].abs() < 1e-10 && (g.turbine.beta_min[1] - 2.0).abs() < 1e-9);
        assert!((g.turbine.bounds(70.0).1 - 9.0).abs() < 1e-9);
    }

    #[test]
    fn single_sample_grid_rejected() {
        let plant = Plant::reference().unwrap();
        let s = GlobalSampling { n_heads: 1, n_powers: 1, n_volumes: 1 };
        assert!(matches!(fit_global(&plant, s), Err(Error::Regression(_))));
    }

    #[test]
    fn envelope_ordering_holds() {
        let plant = Plant::reference().unwrap();
        let g = fit_global(&plant, GlobalSampling::default()).unwrap();
        let (lo, hi) = admissible_heads(&plant);
        g.validate(lo, hi).unwrap();
        assert!(g.delta[0] < 0.0);
    }
}
