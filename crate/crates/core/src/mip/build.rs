//! Mixed-integer baselines: one affine surrogate per relation with big-M
//! mode linking, and a piecewise-bilinear SOS2 interpolation.
//!
//! Hour `t` runs at the head of the volume it starts from, `v_{t-1}`, with
//! `v_{-1} = v_init`; `v_t` is the volume at the end of the hour.

use super::{Builder, Formulation, MipMeta, MipModel, Sense, VarKind};
use crate::approx::{GlobalLinearModel, ModeAffine, Sos2Grid};
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant};

const MODES: [(Mode, &str); 2] = [(Mode::Turbine, "T"), (Mode::Pump, "P")];

fn check_prices(prices: &[f64]) -> Result<()> {
    if prices.is_empty() || prices.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("prices must be nonempty and finite".into()));
    }
    Ok(())
}

/// Smallest big-M that leaves every linking row slack when its mode is off:
/// the largest magnitude of an affine power bound or of the head part of the
/// affine flow over `[h_lo, h_hi]`.
pub fn big_m_floor(global: &GlobalLinearModel, h_lo: f64, h_hi: f64) -> f64 {
    let mut m: f64 = 0.0;
    for a in [&global.turbine, &global.pump] {
        for h in [h_lo, h_hi] {
            let (lo, hi) = a.bounds(h);
            m = m.max(lo.abs()).max(hi.abs()).max((a.alpha[1] * h + a.alpha[2]).abs());
        }
    }
    m
}

/// Power and flow ranges of one affine mode over `[h_lo, h_hi]`, widened to include 0.
fn affine_ranges(a: &ModeAffine, h_lo: f64, h_hi: f64) -> ((f64, f64), (f64, f64)) {
    let (mut p, mut q) = ((0.0f64, 0.0f64), (0.0f64, 0.0f64));
    for h in [h_lo, h_hi] {
        let (lo, hi) = a.bounds(h);
        for pw in [lo, hi] {
            p = (p.0.min(pw), p.1.max(pw));
            let f = a.flow(pw, h);
            q = (q.0.min(f), q.1.max(f));
        }
    }
    (p, q)
}

struct HourVars {
    z: [usize; 3],
    p: [usize; 2],
    q: [usize; 2],
    h: usize,
    v: usize,
}

/// Mode binaries, per-mode power and flow, head and end volume of every hour,
/// with the mode row, volume balance, terminal target and objective.
fn common(b: &mut Builder, plant: &Plant, prices: &[f64], ranges: [((f64, f64), (f64, f64)); 2]) -> Vec<HourVars> {
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let dt_h = c.dt_hours();
    let n = prices.len();
    let mut hours: Vec<HourVars> = Vec::with_capacity(n);
    for (t, &lambda) in prices.iter().enumerate() {
        let z = ["I", "T", "P"].map(|m| b.var(format!("z{m}_{t}"), VarKind::Binary, 0.0, 1.0));
        let p = [0, 1].map(|k| b.var(format!("p{}_{t}", MODES[k].1), VarKind::Continuous, ranges[k].0 .0, ranges[k].0 .1));
        let q = [0, 1].map(|k| b.var(format!("q{}_{t}", MODES[k].1), VarKind::Continuous, ranges[k].1 .0, ranges[k].1 .1));
        let h = b.var(format!("h_{t}"), VarKind::Continuous, c.h_min, c.h_max);
        let v = b.var(format!("v_{t}"), VarKind::Continuous, v_lo, v_hi);
        for k in 0..2 {
            b.model.objective[p[k]] = -dt_h * lambda;
            b.quad(p[k], p[k], 2.0 * dt_h * c.c_op);
        }
        b.row(format!("mode_{t}"), &[(z[0], 1.0), (z[1], 1.0), (z[2], 1.0)], Sense::Eq, 1.0);
        let mut bal = vec![(v, 1.0), (q[0], -c.dt), (q[1], -c.dt)];
        let rhs = if t == 0 { c.v_init } else { 0.0 };
        if let Some(prev) = hours.last() {
            bal.push((prev.v, -1.0));
        }
        b.row(format!("bal_{t}"), &bal, Sense::Eq, rhs);
        hours.push(HourVars { z, p, q, h, v });
    }
    if let Some(last) = hours.last() {
        b.row("target".into(), &[(last.v, 1.0)], Sense::Le, c.v_target);
    }
    hours
}

/// Previous end volume as a row term, or the initial volume as a constant.
fn prev_volume(hours: &[HourVars], t: usize, v_init: f64) -> (Option<usize>, f64) {
    if t == 0 {
        (None, v_init)
    } else {
        (Some(hours[t - 1].v), 0.0)
    }
}

/// Global-linear model with big-M linking of the affine flow and power
/// bounds to the mode binaries.
pub fn build_miqp_gl(prices: &[f64], global: &GlobalLinearModel, plant: &Plant, big_m: f64) -> Result<MipModel> {
    check_prices(prices)?;
    let c = &plant.config;
    let floor = big_m_floor(global, c.h_min, c.h_max);
    if !big_m.is_finite() || big_m < floor {
        return Err(Error::Build(format!("big-M {big_m} below the envelope span {floor}")));
    }
    let meta = MipMeta { formulation: Formulation::Gl, horizon: prices.len(), grid: vec![] };
    let mut b = Builder::new("uphes_gl", meta);
    let affine = [&global.turbine, &global.pump];
    let ranges = affine.map(|a| affine_ranges(a, c.h_min, c.h_max));
    let hours = common(&mut b, plant, prices, ranges);
    let m = big_m;
    for t in 0..hours.len() {
        let hv = &hours[t];
        let (prev, v0) = prev_volume(&hours, t, c.v_init);
        let mut head = vec![(hv.h, 1.0)];
        if let Some(j) = prev {
            head.push((j, -global.delta[0]));
        }
        b.row(format!("head_{t}"), &head, Sense::Eq, global.delta[1] + global.delta[0] * v0);
        for (k, (_, tag)) in MODES.iter().enumerate() {
            let (a, z, p, q, h) = (affine[k], hv.z[k + 1], hv.p[k], hv.q[k], hv.h);
            let ((p_lo, p_hi), (q_lo, q_hi)) = ranges[k];
            b.row(format!("on{tag}_plo_{t}"), &[(p, 1.0), (z, -p_lo)], Sense::Ge, 0.0);
            b.row(format!("on{tag}_phi_{t}"), &[(p, 1.0), (z, -p_hi)], Sense::Le, 0.0);
            b.row(format!("on{tag}_qlo_{t}"), &[(q, 1.0), (z, -q_lo)], Sense::Ge, 0.0);
            b.row(format!("on{tag}_qhi_{t}"), &[(q, 1.0), (z, -q_hi)], Sense::Le, 0.0);
            let flow = [(q, 1.0), (p, -a.alpha[0]), (h, -a.alpha[1])];
            b.row(format!("upc{tag}_lo_{t}"), &[&flow[..], &[(z, -m)]].concat(), Sense::Ge, a.alpha[2] - m);
            b.row(format!("upc{tag}_hi_{t}"), &[&flow[..], &[(z, m)]].concat(), Sense::Le, a.alpha[2] + m);
            b.row(format!("env{tag}_lo_{t}"), &[(p, 1.0), (h, -a.beta_min[0]), (z, -m)], Sense::Ge, a.beta_min[1] - m);
            b.row(format!("env{tag}_hi_{t}"), &[(p, 1.0), (h, -a.beta_max[0]), (z, m)], Sense::Le, a.beta_max[1] + m);
        }
    }
    b.finish()
}

/// Piecewise-bilinear model: SOS2 head weights per hour, SOS2 power weights
/// per hour and head knot, and exact product rows for `z·Ω^vh`.
pub fn build_miqp_pw(prices: &[f64], grid: &Sos2Grid, plant: &Plant) -> Result<MipModel> {
    check_prices(prices)?;
    let n_h = grid.heads.len();
    let tables = [&grid.turbine, &grid.pump];
    if n_h < 2 || grid.volumes.len() != n_h || tables.iter().any(|t| t.n_powers() < 2 || t.powers.len() != n_h || t.flows.len() != n_h) {
        return Err(Error::Build("interpolation grid needs at least 2 knots per axis and matching tables".into()));
    }
    let c = &plant.config;
    let meta = MipMeta { formulation: Formulation::Pw, horizon: prices.len(), grid: vec![n_h, grid.turbine.n_powers(), grid.pump.n_powers()] };
    let mut b = Builder::new("uphes_pw", meta);
    let ranges = tables.map(|tb| {
        let fold = |rows: &Vec<Vec<f64>>| rows.iter().flatten().fold((0.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        (fold(&tb.powers), fold(&tb.flows))
    });
    let hours = common(&mut b, plant, prices, ranges);
    for t in 0..hours.len() {
        let (z, p, q, h) = (hours[t].z, hours[t].p, hours[t].q, hours[t].h);
        let (prev, v0) = prev_volume(&hours, t, c.v_init);
        let wvh: Vec<usize> = (0..n_h).map(|i| b.var(format!("wvh_{t}_{i}"), VarKind::Sos2Weight, 0.0, 1.0)).collect();
        b.model.sos2.push(super::Sos2Group { name: format!("svh_{t}"), vars: wvh.clone() });
        b.row(format!("vh_sum_{t}"), &wvh.iter().map(|&w| (w, 1.0)).collect::<Vec<_>>(), Sense::Eq, 1.0);
        let mut hrow: Vec<(usize, f64)> = wvh.iter().zip(&grid.heads).map(|(&w, &hk)| (w, -hk)).collect();
        hrow.push((h, 1.0));
        b.row(format!("vh_h_{t}"), &hrow, Sense::Eq, 0.0);
        let mut vrow: Vec<(usize, f64)> = wvh.iter().zip(&grid.volumes).map(|(&w, &vk)| (w, vk)).collect();
        if let Some(j) = prev {
            vrow.push((j, -1.0));
        }
        b.row(format!("vh_v_{t}"), &vrow, Sense::Eq, v0);

        for (k, (_, tag)) in MODES.iter().enumerate() {
            let tb = tables[k];
            let zm = z[k + 1];
            let mut all = Vec::new();
            let mut rec_p = vec![(p[k], 1.0)];
            let mut rec_q = vec![(q[k], 1.0)];
            for i in 0..n_h {
                let w: Vec<usize> =
                    (0..tb.n_powers()).map(|j| b.var(format!("w{tag}_{t}_{i}_{j}"), VarKind::Sos2Weight, 0.0, 1.0)).collect();
                b.model.sos2.push(super::Sos2Group { name: format!("s{tag}_{t}_{i}"), vars: w.clone() });
                let y = b.var(format!("y{tag}_{t}_{i}"), VarKind::Continuous, 0.0, 1.0);
                b.row(format!("y{tag}_z_{t}_{i}"), &[(y, 1.0), (zm, -1.0)], Sense::Le, 0.0);
                b.row(format!("y{tag}_w_{t}_{i}"), &[(y, 1.0), (wvh[i], -1.0)], Sense::Le, 0.0);
                b.row(format!("y{tag}_zw_{t}_{i}"), &[(y, 1.0), (wvh[i], -1.0), (zm, -1.0)], Sense::Ge, -1.0);
                let mut cell: Vec<(usize, f64)> = w.iter().map(|&x| (x, 1.0)).collect();
                cell.push((y, -1.0));
                b.row(format!("cell{tag}_{t}_{i}"), &cell, Sense::Eq, 0.0);
                for (j, &x) in w.iter().enumerate() {
                    all.push((x, 1.0));
                    rec_p.push((x, -tb.powers[i][j]));
                    rec_q.push((x, -tb.flows[i][j]));
                }
            }
            all.push((zm, -1.0));
            b.row(format!("sum{tag}_{t}"), &all, Sense::Eq, 0.0);
            b.row(format!("rec{tag}_p_{t}"), &rec_p, Sense::Eq, 0.0);
            b.row(format!("rec{tag}_q_{t}"), &rec_q, Sense::Eq, 0.0);
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{build_sos2_grid, fit_global, GlobalSampling};

    fn setup() -> (Plant, GlobalLinearModel) {
        let plant = Plant::reference().unwrap();
        let global = fit_global(&plant, GlobalSampling::default()).unwrap();
        (plant, global)
    }

    #[test]
    fn gl_structure_for_a_day() {
        let (plant, global) = setup();
        let m = build_miqp_gl(&[50.0; 24], &global, &plant, 1e3).unwrap();
        assert_eq!(m.count(VarKind::Binary), 72);
        let mode_rows: Vec<_> = m.rows.iter().filter(|r| r.name.starts_with("mode_")).collect();
        assert_eq!(mode_rows.len(), 24);
        assert!(mode_rows.iter().all(|r| r.sense == Sense::Eq && r.rhs == 1.0 && r.coeffs.len() == 3));
        assert_eq!(m.quadratic.len(), 48);
        assert!(m.sos2.is_empty());
    }

    #[test]
    fn small_big_m_is_rejected() {
        let (plant, global) = setup();
        let floor = big_m_floor(&global, plant.config.h_min, plant.config.h_max);
        assert!(floor > 0.0);
        assert!(matches!(build_miqp_gl(&[50.0; 2], &global, &plant, 0.5 * floor), Err(Error::Build(_))));
        assert!(build_miqp_gl(&[50.0; 2], &global, &plant, floor).is_ok());
    }

    #[test]
    fn pw_weight_count() {
        let (plant, _) = setup();
        let grid = build_sos2_grid(&plant, 5, 4, 3).unwrap();
        let m = build_miqp_pw(&[50.0; 24], &grid, &plant).unwrap();
        assert_eq!(m.count(VarKind::Sos2Weight), 24 * (5 * 4 + 5 * 3) + 24 * 5);
        assert_eq!(m.count(VarKind::Binary), 72);
        assert_eq!(m.sos2.len(), 24 * (1 + 2 * 5));
        assert_eq!(m.meta.grid, vec![5, 4, 3]);
    }
}
