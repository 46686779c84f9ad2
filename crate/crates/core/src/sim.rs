//! Ex-post evaluation of a power schedule under the nonlinear plant dynamics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{Mode, Plant, Role, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// Power moved onto the envelope at the current head.
    Clamped { hour: usize, requested: f64, applied: f64 },
    /// Volume would have left its admissible range; the hour runs idle.
    IdleForced { hour: usize, requested: f64 },
}

/// Simulated trajectory with the data the reverse pass needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrajectory {
    pub trajectory: Trajectory,
    /// Head after the last hour.
    pub terminal_head: f64,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub scheduled: Vec<f64>,
    pub trajectory: Trajectory,
    pub terminal_head: f64,
    pub revenue: f64,
    pub operating_cost: f64,
    pub si_penalty: f64,
    pub vol_penalty: f64,
    pub profit: f64,
    pub events: Vec<SimEvent>,
}

/// One simulated hour from volume `v` at head `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub power: f64,
    pub flow: f64,
    pub mode: Mode,
    /// Volume at the end of the hour.
    pub volume: f64,
    /// Head at the start of the next hour.
    pub head_next: f64,
    /// Request after clamping to the envelope.
    pub requested_applied: f64,
    pub clamped: bool,
    pub forced: bool,
}

pub fn sim_step(plant: &Plant, v: f64, h: f64, ph: f64) -> Result<Step> {
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let mode = Mode::from_power(ph);
    let mut s = Step {
        power: 0.0,
        flow: 0.0,
        mode: Mode::Idle,
        volume: v,
        head_next: h,
        requested_applied: ph,
        clamped: false,
        forced: false,
    };
    if mode.is_active() {
        let (lo, hi) = plant.upc.envelope(mode, h)?;
        let pc = ph.clamp(lo, hi);
        s.clamped = pc != ph;
        s.requested_applied = pc;
        let qc = plant.upc.flow(mode, pc, h)?;
        let v_new = v + c.dt * qc;
        if (v_lo..=v_hi).contains(&v_new) {
            (s.power, s.flow, s.mode, s.volume) = (pc, qc, mode, v_new);
            s.head_next = plant.head_at(v_new);
        } else {
            s.forced = true;
        }
    }
    Ok(s)
}

/// Revenue less operating cost and settlement penalty for one hour.
pub fn hour_cashflow(plant: &Plant, price: f64, requested: f64, realized: f64) -> f64 {
    let c = &plant.config;
    let dt_h = c.dt_hours();
    let si = dt_h * price * ((requested - realized).max(0.0) + 0.5 * (realized - requested).max(0.0));
    dt_h * price * realized - dt_h * c.c_op * realized * realized - si
}

/// Value of lower-reservoir water left above target.
pub fn terminal_penalty(plant: &Plant, median_price: f64, v_end: f64, h_end: f64) -> f64 {
    let excess = (v_end - plant.config.v_target).max(0.0);
    if excess > 0.0 {
        median_price * vol_factor(plant) * h_end * excess
    } else {
        0.0
    }
}

/// Hour-by-hour rollout: clamp to the envelope at the current head, then
/// force idle if the volume update would leave the admissible range.
pub fn simulate(schedule: &[f64], plant: &Plant) -> Result<SimTrajectory> {
    if let Some(t) = schedule.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite power at hour {t}")));
    }
    let c = &plant.config;
    let n = schedule.len();
    let mut traj = Trajectory {
        power: Vec::with_capacity(n),
        flow: Vec::with_capacity(n),
        head: Vec::with_capacity(n),
        volume: Vec::with_capacity(n),
        mode: Vec::with_capacity(n),
        role: Role::Simulated,
    };
    let mut events = Vec::new();
    let mut h = c.h_init;
    let mut v = c.v_init;
    for (t, &ph) in schedule.iter().enumerate() {
        let s = sim_step(plant, v, h, ph)?;
        if s.clamped {
            events.push(SimEvent::Clamped { hour: t, requested: ph, applied: s.requested_applied });
        }
        if s.forced {
            events.push(SimEvent::IdleForced { hour: t, requested: ph });
        }
        traj.power.push(s.power);
        traj.flow.push(s.flow);
        traj.head.push(h);
        traj.volume.push(s.volume);
        traj.mode.push(s.mode);
        v = s.volume;
        h = s.head_next;
    }
    Ok(SimTrajectory { trajectory: traj, terminal_head: h, events })
}

/// Median with the midpoint rule for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Value per m³ of lower-reservoir water above target, per unit head and price.
fn vol_factor(plant: &Plant) -> f64 {
    let c = &plant.config;
    c.eta_ref * c.rho * c.g / 3.6e9
}

/// Profit decomposition: settle realized power at the day-ahead price, charge
/// shortfalls an extra `λ` and refund surpluses at `λ/2`, price leftover water.
pub fn expost_profit(sim: &SimTrajectory, schedule: &[f64], prices: &[f64], plant: &Plant) -> Result<SimOutcome> {
    let traj = &sim.trajectory;
    if schedule.len() != traj.horizon() || prices.len() != traj.horizon() {
        return Err(Error::InvalidArgument(format!(
            "schedule {}, prices {}, trajectory {} differ in length",
            schedule.len(),
            prices.len(),
            traj.horizon()
        )));
    }
    let c = &plant.config;
    let dt_h = c.dt_hours();
    let (mut revenue, mut cost, mut si) = (0.0, 0.0, 0.0);
    for t in 0..traj.horizon() {
        let (ph, p) = (schedule[t], traj.power[t]);
        revenue += dt_h * prices[t] * p;
        cost += dt_h * c.c_op * p * p;
        si += dt_h * prices[t] * ((ph - p).max(0.0) + 0.5 * (p - ph).max(0.0));
    }
    let v_end = traj.volume.last().copied().unwrap_or(c.v_init);
    let vol = terminal_penalty(plant, median(prices), v_end, sim.terminal_head);
    Ok(SimOutcome {
        scheduled: schedule.to_vec(),
        trajectory: traj.clone(),
        terminal_head: sim.terminal_head,
        revenue,
        operating_cost: cost,
        si_penalty: si,
        vol_penalty: vol,
        profit: revenue - cost - si - vol,
        events: sim.events.clone(),
    })
}

/// Simulate and settle in one call.
pub fn evaluate_schedule(schedule: &[f64], prices: &[f64], plant: &Plant) -> Result<SimOutcome> {
    expost_profit(&simulate(schedule, plant)?, schedule, prices, plant)
}

/// Pathwise `dΠ/dp̂`.
///
/// Through an active clamp the realized power follows the envelope, so it has
/// no sensitivity to the request but keeps the envelope's head slope. Idle
/// requests and idle-forced hours carry no physical sensitivity; the
/// settlement term still depends on the request there.
pub fn profit_grad(schedule: &[f64], prices: &[f64], plant: &Plant) -> Result<Vec<f64>> {
    let sim = simulate(schedule, plant)?;
    if prices.len() != schedule.len() {
        return Err(Error::InvalidArgument("prices and schedule differ in length".into()));
    }
    let c = &plant.config;
    let dt_h = c.dt_hours();
    let n = schedule.len();
    let traj = &sim.trajectory;
    let forced: Vec<bool> = {
        let mut f = vec![false; n];
        for e in &sim.events {
            if let SimEvent::IdleForced { hour, .. } = e {
                f[*hour] = true;
            }
        }
        f
    };

    let mut grad = vec![0.0; n];
    let v_end = traj.volume.last().copied().unwrap_or(c.v_init);
    let mut g_v = 0.0;
    if v_end > c.v_target {
        let (h_end, dh, _) = plant.head_derivs(v_end);
        let k = median(prices) * vol_factor(plant);
        g_v -= k * (h_end + dh * (v_end - c.v_target));
    }
    let mut g_h_next = 0.0;
    for t in (0..n).rev() {
        g_v += g_h_next * plant.head_derivs(traj.volume[t]).1;

        let (ph, p, h, lam) = (schedule[t], traj.power[t], traj.head[t], prices[t]);
        let (si_p, si_ph) = if ph > p {
            (dt_h * lam, -dt_h * lam)
        } else if p > ph {
            (-0.5 * dt_h * lam, 0.5 * dt_h * lam)
        } else {
            (0.0, 0.0)
        };
        let active = traj.mode[t].is_active();
        if !active || forced[t] {
            grad[t] = if Mode::from_power(ph).is_active() { si_ph } else { 0.0 };
            g_h_next = 0.0;
            continue;
        }
        let mode = traj.mode[t];
        let ((lo, dlo), (hi, dhi)) = plant.upc.envelope_with_slope(mode, h)?;
        let (dp_dph, dp_dh) = if ph > hi {
            (0.0, dhi)
        } else if ph < lo {
            (0.0, dlo)
        } else {
            (1.0, 0.0)
        };
        let (fp, fh) = plant.upc.flow_grad(mode, p, h)?;
        let g_q = g_v * c.dt;
        let g_p = dt_h * (lam - 2.0 * c.c_op * p) + si_p + g_q * fp;
        grad[t] = si_ph + g_p * dp_dph;
        g_h_next = g_q * fh + g_p * dp_dh;
    }
    Ok(grad)
}

/// One JSON object per line.
pub fn write_outcomes(path: &Path, outcomes: &[SimOutcome]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for o in outcomes {
        serde_json::to_writer(&mut f, o)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_outcomes(path: &Path) -> Result<Vec<SimOutcome>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 1, msg: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> Plant {
        Plant::reference().unwrap()
    }

    #[test]
    fn all_zero_schedule_is_idle_identity() {
        let plant = plant();
        let out = evaluate_schedule(&[0.0; 24], &[60.0; 24], &plant).unwrap();
        assert!(out.trajectory.power.iter().chain(&out.trajectory.flow).all(|&v| v == 0.0));
        assert!(out.trajectory.volume.iter().all(|&v| v == plant.config.v_init));
        assert_eq!((out.profit, out.si_penalty, out.vol_penalty), (0.0, 0.0, 0.0));
    }

    #[test]
    fn request_above_envelope_is_clamped() {
        let plant = plant();
        let sim = simulate(&[500.0], &plant).unwrap();
        let (_, hi) = plant.upc.envelope(Mode::Turbine, plant.config.h_init).unwrap();
        assert_eq!(sim.trajectory.power[0], hi);
        assert!(matches!(sim.events[0], SimEvent::Clamped { hour: 0, .. }));
    }

    #[test]
    fn sustained_turbine_forces_idle() {
        let plant = plant();
        let sim = simulate(&[500.0; 24], &plant).unwrap();
        let forced = sim.events.iter().position(|e| matches!(e, SimEvent::IdleForced { .. })).unwrap();
        let hour = match sim.events[forced] {
            SimEvent::IdleForced { hour, .. } => hour,
            _ => unreachable!(),
        };
        assert_eq!(sim.trajectory.power[hour], 0.0);
        assert_eq!(sim.trajectory.volume[hour], sim.trajectory.volume[hour - 1]);
    }

    fn one_hour_plant() -> Plant {
        let mut p = plant();
        p.config.c_op = 0.4;
        p
    }

    #[test]
    fn one_hour_arithmetic() {
        let plant = one_hour_plant();
        let sim = SimTrajectory {
            trajectory: Trajectory {
                power: vec![10.0],
                flow: vec![1.0],
                head: vec![78.0],
                volume: vec![plant.config.v_target],
                mode: vec![Mode::Turbine],
                role: Role::Simulated,
            },
            terminal_head: 78.0,
            events: vec![],
        };
        let out = expost_profit(&sim, &[10.0], &[100.0], &plant).unwrap();
        assert!((out.profit - 960.0).abs() < 1e-9);
        let mut short = sim.clone();
        short.trajectory.power[0] = 8.0;
        let out = expost_profit(&short, &[10.0], &[100.0], &plant).unwrap();
        assert!((out.si_penalty - 200.0).abs() < 1e-9);
        assert!((out.revenue - out.si_penalty - 600.0).abs() < 1e-9);
        let mut surplus = sim;
        surplus.trajectory.power[0] = 12.0;
        let out = expost_profit(&surplus, &[10.0], &[100.0], &plant).unwrap();
        assert!((out.si_penalty - 100.0).abs() < 1e-9);
        assert!((out.revenue - out.si_penalty - 1100.0).abs() < 1e-9);
    }

    #[test]
    fn median_rule() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn idle_forced_hour_has_only_settlement_gradient() {
        let plant = plant();
        let schedule = [500.0; 24];
        let sim = simulate(&schedule, &plant).unwrap();
        let hour = sim
            .events
            .iter()
            .find_map(|e| match e {
                SimEvent::IdleForced { hour, .. } => Some(*hour),
                _ => None,
            })
            .unwrap();
        let prices = [70.0; 24];
        let g = profit_grad(&schedule, &prices, &plant).unwrap();
        assert_eq!(g[hour], -70.0);
    }

    #[test]
    fn interior_gradient_matches_finite_difference() {
        let plant = plant();
        let prices: Vec<f64> = (0..24).map(|t| 40.0 + 25.0 * ((t as f64) / 24.0 * std::f64::consts::TAU).sin()).collect();
        let schedule: Vec<f64> =
            (0..24).map(|t| if t % 3 == 0 { 0.0 } else if t % 2 == 0 { 6.0 } else { -7.0 }).collect();
        let g = profit_grad(&schedule, &prices, &plant).unwrap();
        let eps = 1e-4;
        for t in 0..24 {
            if schedule[t] == 0.0 {
                continue;
            }
            let mut up = schedule.clone();
            up[t] += eps;
            let mut dn = schedule.clone();
            dn[t] -= eps;
            let fd = (evaluate_schedule(&up, &prices, &plant).unwrap().profit
                - evaluate_schedule(&dn, &prices, &plant).unwrap().profit)
                / (2.0 * eps);
            assert!((g[t] - fd).abs() <= 1e-3 * fd.abs().max(1.0), "hour {t}: {} vs {fd}", g[t]);
        }
    }

    #[test]
    fn json_lines_round_trip() {
        let plant = plant();
        let out = evaluate_schedule(&[5.0, 0.0, -6.0], &[50.0, 20.0, 10.0], &plant).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.jsonl");
        write_outcomes(&path, &[out.clone(), out.clone()]).unwrap();
        assert_eq!(read_outcomes(&path).unwrap(), vec![out.clone(), out]);
    }
}
