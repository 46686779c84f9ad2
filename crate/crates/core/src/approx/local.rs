use crate::error::{Error, Result};
use crate::plant::upc::Taylor2;
use crate::plant::{Mode, Plant, Trajectory};

/// First-order expansion of both nonlinear relations around a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearization {
    /// Flow against `[p, h, 1]` per hour; zero on idle hours.
    pub flow: Vec<[f64; 3]>,
    /// Lower volume against `[h, 1]` per hour.
    pub volume: Vec<[f64; 2]>,
    /// Second-order flow data at each expansion point, for differentiation.
    pub flow_taylor: Vec<Option<Taylor2>>,
    /// `d²v/dh²` at each expansion head.
    pub volume_curvature: Vec<f64>,
    pub modes: Vec<Mode>,
}

pub fn local_linearize(plant: &Plant, traj: &Trajectory) -> Result<LocalLinearization> {
    traj.validate()?;
    let n = traj.horizon();
    let mut out = LocalLinearization {
        flow: Vec::with_capacity(n),
        volume: Vec::with_capacity(n),
        flow_taylor: Vec::with_capacity(n),
        volume_curvature: Vec::with_capacity(n),
        modes: traj.mode.clone(),
    };
    for t in 0..n {
        let (p, h) = (traj.power[t], traj.head[t]);
        if !h.is_finite() || !p.is_finite() {
            return Err(Error::Numerical(format!("non-finite expansion point at hour {t}")));
        }
        if traj.mode[t].is_active() {
            let tay = plant.upc.flow_taylor(traj.mode[t], p, h)?;
            out.flow.push([tay.dp, tay.dh, tay.value - tay.dp * p - tay.dh * h]);
            out.flow_taylor.push(Some(tay));
        } else {
            out.flow.push([0.0; 3]);
            out.flow_taylor.push(None);
        }
        let (v, dv, d2v) = plant.volume_at_head(h)?;
        out.volume.push([dv, v - dv * h]);
        out.volume_curvature.push(d2v);
    }
    Ok(out)
}
