//! Measurements shared by the property tests and the acceptance target.

use nalgebra::DVector;
use rand::Rng;

use super::*;
use uphes::approx::{fit_global, local_linearize, GlobalLinearModel, GlobalSampling, ModeAffine};
use uphes::mip::{big_m_floor, build_miqp_gl, solve_enumerated, EnumLimits, MipModel, SolverShim};
use uphes::net::{init_params, Checkpoint, FeatureNorm, WeightBounds};
use uphes::oracle::{action_levels, dp_schedule, enumerate_exact, DpGrid};
use uphes::plant::{Mode, Plant, Role, Trajectory};
use uphes::qp::{build_penalized_qp, differentiate_qp, solve_qp, PenaltyWeights, QpTolerances, RefineConfig};
use uphes::sim::{evaluate_schedule, expost_profit, profit_grad, simulate, SimTrajectory};
use uphes::train::{Pipeline, TrainingSample};

/// Worst relative error of the analytic flow gradient against central differences.
pub fn flow_grad_error(plant: &Plant, points: usize) -> f64 {
    let mut rng = rng(11);
    let (h_lo, h_hi) = (plant.config.h_min, plant.config.h_max);
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let mode = if i % 2 == 0 { Mode::Turbine } else { Mode::Pump };
        let h = rng.random_range(h_lo + 0.5..h_hi - 0.5);
        let (lo, hi) = plant.upc.envelope(mode, h).unwrap();
        let p = rng.random_range(lo..hi);
        let (dp, dh) = plant.upc.flow_grad(mode, p, h).unwrap();
        let f = |p: f64, h: f64| plant.upc.flow(mode, p, h).unwrap();
        let (ep, eh) = (1e-5 * (1.0 + p.abs()), 1e-5 * h);
        let fd_p = (f(p + ep, h) - f(p - ep, h)) / (2.0 * ep);
        let fd_h = (f(p, h + eh) - f(p, h - eh)) / (2.0 * eh);
        let scale = dp.abs().max(dh.abs());
        worst = worst.max((dp - fd_p).abs() / scale).max((dh - fd_h).abs() / scale);
    }
    worst
}

/// Worst relative error of QP weight Jacobian-vector products against re-solves on a day.
pub fn qp_jvp_error(plant: &Plant, directions: usize) -> f64 {
    let global = fit_global(plant, GlobalSampling::default()).unwrap();
    let prices = day_prices(24);
    let warm = warm_start(plant, &prices);
    let lin = local_linearize(plant, &warm).unwrap();
    let mut rng = rng(5);
    let w: Vec<f64> = (0..72).map(|_| rng.random_range(0.5..5.0)).collect();
    let tol = QpTolerances::default();
    let solve = |w: &[f64]| {
        let inst = build_penalized_qp(plant, &global, &prices, &warm, &lin, &PenaltyWeights::from_flat(w).unwrap()).unwrap();
        let sol = solve_qp(&inst.problem, &tol).unwrap();
        (inst, sol)
    };
    let (inst, sol) = solve(&w);
    let jac = differentiate_qp(&inst, &sol).unwrap();
    assert!(!jac.least_squares);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
        // relative step; smaller steps drown in the solver's KKT tolerance
        let eps = 1e-3;
        let shifted = |s: f64| {
            let wv: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a * (1.0 + s * b)).collect();
            solve(&wv).1.x
        };
        // directional derivative along w ∘ d
        let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
        let jvp = &jac.jacobian * DVector::from_iterator(72, w.iter().zip(&d).map(|(a, b)| a * b));
        assert!(jvp.iter().all(|x| x.is_finite()));
        worst = worst.max((&jvp - &fd).norm() / fd.norm().max(1e-12));
    }
    worst
}

/// Worst relative error of the pathwise profit gradient and the number of hours checked.
/// Hours near an envelope clamp and schedules that hit a state bound are skipped.
pub fn sim_grad_error(plant: &Plant) -> (f64, usize) {
    let prices = day_prices(24);
    let mut rng = rng(3);
    let (mut worst, mut checked): (f64, usize) = (0.0, 0);
    for _ in 0..20 {
        let sched: Vec<f64> = (0..24)
            .map(|_| match rng.random_range(0..3) {
                0 => 0.0,
                1 => rng.random_range(4.0..8.0),
                _ => -rng.random_range(7.0..9.0),
            })
            .collect();
        let sim = simulate(&sched, plant).unwrap();
        if !sim.events.is_empty() {
            continue;
        }
        let g = profit_grad(&sched, &prices, plant).unwrap();
        let profit = |s: &[f64]| evaluate_schedule(s, &prices, plant).unwrap().profit;
        let t_ = &sim.trajectory;
        for t in 0..24 {
            if sched[t] == 0.0 {
                continue;
            }
            let (lo, hi) = plant.upc.envelope(t_.mode[t], t_.head[t]).unwrap();
            if sched[t] - lo < 1e-2 || hi - sched[t] < 1e-2 {
                continue;
            }
            let eps = 1e-5;
            let mut up = sched.clone();
            up[t] += eps;
            let mut dn = sched.clone();
            dn[t] -= eps;
            let fd = (profit(&up) - profit(&dn)) / (2.0 * eps);
            worst = worst.max(rel_err(g[t], fd, 1.0));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Worst relative error of the loss gradient in network parameters on a 6-hour toy.
pub fn end_to_end_grad_error(plant: &Plant, directions: usize) -> f64 {
    let global = fit_global(plant, GlobalSampling::default()).unwrap();
    let prices = vec![30.0, 25.0, 60.0, 110.0, 90.0, 40.0];
    let warm = simulate(&[-8.0, -7.5, 0.0, 7.0, 6.5, 0.0], plant).unwrap().trajectory;
    let bounds = WeightBounds::default();
    let ck = Checkpoint::new(FeatureNorm::from_plant(plant).unwrap(), bounds, init_params(8, &bounds, 4).unwrap());
    let sample = TrainingSample { scenario: "toy".into(), prices, warm, noise: 0.0, source: "hand".into() };
    let p = Pipeline { plant, global: &global, refine: RefineConfig::default() };
    let (_, g, _) = p.loss_and_grad(&ck, &sample).unwrap();
    let mut rng = rng(9);
    let loss = |data: &[f64]| {
        let mut c = ck.clone();
        c.params.data = data.to_vec();
        -p.run(&c, &sample).unwrap().outcome.profit
    };
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d: Vec<f64> = (0..g.data.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let an: f64 = g.data.iter().zip(&d).map(|(a, b)| a * b).sum();
        let eps = 1e-5;
        let at = |s: f64| -> Vec<f64> { ck.params.data.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let fd = (loss(&at(eps)) - loss(&at(-eps))) / (2.0 * eps);
        worst = worst.max(rel_err(an, fd, 1e-6));
    }
    worst
}

/// Simulates random schedules and returns the first violated invariant.
pub fn conservation_violation(plant: &Plant, schedules: usize) -> Option<String> {
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let mut rng = rng(2024);
    for k in 0..schedules {
        let sched = random_schedule(&mut rng, 24);
        let t = simulate(&sched, plant).unwrap().trajectory;
        let mut v = c.v_init;
        for h in 0..24 {
            let expected = v + c.dt * t.flow[h];
            if (t.volume[h] - expected).abs() > 1e-6 * expected.abs().max(1.0) {
                return Some(format!("schedule {k} hour {h}: mass balance"));
            }
            if !(v_lo..=v_hi).contains(&t.volume[h]) {
                return Some(format!("schedule {k} hour {h}: volume {}", t.volume[h]));
            }
            if t.head[h] < c.h_min - 1e-9 || t.head[h] > c.h_max + 1e-9 {
                return Some(format!("schedule {k} hour {h}: head {}", t.head[h]));
            }
            if Mode::from_power(t.power[h]) != t.mode[h] {
                return Some(format!("schedule {k} hour {h}: mode"));
            }
            if t.mode[h].is_active() {
                let (lo, hi) = plant.upc.envelope(t.mode[h], t.head[h]).unwrap();
                if t.power[h] < lo || t.power[h] > hi {
                    return Some(format!("schedule {k} hour {h}: power {} outside [{lo}, {hi}]", t.power[h]));
                }
            } else if t.flow[h] != 0.0 {
                return Some(format!("schedule {k} hour {h}: idle flow"));
            }
            v = t.volume[h];
        }
    }
    None
}

/// Instances on which the DP differs from enumeration, out of `n` random ones.
pub fn dp_enumeration_mismatches(plant: &Plant, n: usize) -> Vec<String> {
    let mut rng = rng(77);
    let mut bad = Vec::new();
    for k in 0..n {
        let horizon = 1 + k % 4;
        let prices: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.0..200.0)).collect();
        let actions = action_levels(1 + k % 3).unwrap();
        let exact = enumerate_exact(plant, &prices, &actions).unwrap();
        let grid = DpGrid::reachable(plant, actions.clone(), horizon).unwrap();
        let dp = dp_schedule(plant, &prices, &grid).unwrap();
        if dp.best.value != exact.value || dp.best.actions != exact.actions {
            bad.push(format!("instance {k}: dp {} vs exact {}", dp.best.value, exact.value));
        }
        let sim = evaluate_schedule(&exact.schedule, &prices, plant).unwrap();
        if rel_err(sim.profit, exact.value, 1.0) >= 1e-9 {
            bad.push(format!("instance {k}: simulated {} vs exact {}", sim.profit, exact.value));
        }
    }
    bad
}

fn affine(g: &GlobalLinearModel, m: Mode) -> Option<&ModeAffine> {
    g.mode(m).ok()
}

/// Best objective of the 2-hour GL model for fixed modes: a dense grid over
/// the first power and the closed-form best second power. Returns the value
/// and the Lipschitz bound of the grid error.
fn gl_two_hour_modes(plant: &Plant, g: &GlobalLinearModel, prices: &[f64; 2], modes: [Mode; 2], n: usize) -> Option<(f64, f64)> {
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let dt_h = c.dt_hours();
    let cost = |p: f64, lam: f64| -dt_h * lam * p + dt_h * c.c_op * p * p;
    let head = |v: f64| g.delta[0] * v + g.delta[1];
    let in_h = |h: f64| (c.h_min - 1e-9..=c.h_max + 1e-9).contains(&h);
    let h0 = head(c.v_init);
    if !in_h(h0) {
        return None;
    }
    let interval = |m: Mode, h: f64| match affine(g, m) {
        Some(a) => a.bounds(h),
        None => (0.0, 0.0),
    };
    let (lo0, hi0) = interval(modes[0], h0);
    if lo0 > hi0 {
        return None;
    }
    let flow = |m: Mode, p: f64, h: f64| affine(g, m).map_or(0.0, |a| a.flow(p, h));
    let mut best: Option<f64> = None;
    let pts = if modes[0] == Mode::Idle { 1 } else { n };
    for k in 0..pts {
        let p0 = if pts == 1 { lo0 } else { lo0 + (hi0 - lo0) * k as f64 / (pts - 1) as f64 };
        let v0 = c.v_init + c.dt * flow(modes[0], p0, h0);
        if !(v_lo..=v_hi).contains(&v0) {
            continue;
        }
        let h1 = head(v0);
        if !in_h(h1) {
            continue;
        }
        let (mut lo1, mut hi1) = interval(modes[1], h1);
        let v_cap = v_hi.min(c.v_target);
        if let Some(a) = affine(g, modes[1]) {
            // v1 = v0 + dt·(α0 p + α1 h1 + α2) within [v_lo, v_cap]
            let base = v0 + c.dt * (a.alpha[1] * h1 + a.alpha[2]);
            let (x, y) = ((v_lo - base) / (c.dt * a.alpha[0]), (v_cap - base) / (c.dt * a.alpha[0]));
            lo1 = lo1.max(x.min(y));
            hi1 = hi1.min(x.max(y));
        } else if v0 > v_cap {
            continue;
        }
        if lo1 > hi1 {
            continue;
        }
        let p1 = (prices[1] / (2.0 * c.c_op)).clamp(lo1, hi1);
        let val = cost(p0, prices[0]) + cost(p1, prices[1]);
        best = Some(best.map_or(val, |b: f64| b.min(val)));
    }
    let p_max = 30.0;
    let step = (hi0 - lo0) / (n - 1) as f64;
    let lip: f64 = prices.iter().map(|l| dt_h * (l.abs() + 2.0 * c.c_op * p_max)).sum();
    // the second hour's bounds move with the first power through volume and head
    let shift = [Mode::Turbine, Mode::Pump]
        .iter()
        .filter_map(|&m| affine(g, m))
        .map(|a| {
            let a0 = affine(g, modes[0]).map_or(0.0, |x| x.alpha[0]);
            let dh = g.delta[0] * c.dt * a0;
            (a.beta_min[0] * dh).abs().max((a.beta_max[0] * dh).abs()).max(((a0 + a.alpha[1] * dh) / a.alpha[0]).abs())
        })
        .fold(0.0f64, f64::max);
    best.map(|b| (b, lip * (1.0 + shift) * step))
}

/// Grid optimum of the 2-hour GL model over all mode pairs and its error bound.
pub fn gl_oracle(plant: &Plant, g: &GlobalLinearModel, prices: &[f64; 2]) -> (f64, f64) {
    let modes = [Mode::Idle, Mode::Turbine, Mode::Pump];
    let mut best = (f64::INFINITY, 0.0);
    for &a in &modes {
        for &b in &modes {
            if let Some((v, tol)) = gl_two_hour_modes(plant, g, prices, [a, b], 20001) {
                if v < best.0 {
                    best = (v, tol);
                }
            }
        }
    }
    best
}

/// External solver when configured, built-in enumeration otherwise.
pub fn solve_mip_objective(model: &MipModel) -> f64 {
    match SolverShim::from_env() {
        Some(shim) => {
            let dir = tempfile::tempdir().unwrap();
            shim.solve(model, dir.path()).unwrap().objective
        }
        None => solve_enumerated(model, &EnumLimits::default()).unwrap().objective,
    }
}

/// Two-hour GL optima outside the oracle band, for both big-M choices.
pub fn gl_two_hour_violations(plant: &Plant) -> Vec<String> {
    let g = fit_global(plant, GlobalSampling::default()).unwrap();
    let floor = big_m_floor(&g, plant.config.h_min, plant.config.h_max);
    let mut bad = Vec::new();
    for prices in [[20.0, 140.0], [140.0, 20.0], [60.0, 65.0], [-10.0, 90.0]] {
        let (oracle, tol) = gl_oracle(plant, &g, &prices);
        for m in [floor, 2.0 * floor] {
            let got = solve_mip_objective(&build_miqp_gl(&prices, &g, plant, m).unwrap());
            if got > oracle + 1e-6 * oracle.abs().max(1.0) || got < oracle - tol - 1e-6 {
                bad.push(format!("{prices:?} big-M {m:.3}: {got} vs oracle {oracle} ± {tol}"));
            }
        }
    }
    bad
}

fn one_hour(plant: &Plant, power: f64) -> SimTrajectory {
    let c = &plant.config;
    SimTrajectory {
        trajectory: Trajectory {
            power: vec![power],
            flow: vec![0.0],
            head: vec![c.h_init],
            volume: vec![c.v_target],
            mode: vec![Mode::from_power(power)],
            role: Role::Simulated,
        },
        terminal_head: c.h_init,
        events: vec![],
    }
}

/// Imbalance charges of a 2 MWh shortfall and a 2 MWh surplus at price 100.
pub fn si_penalties(plant: &Plant) -> (f64, f64) {
    let short = expost_profit(&one_hour(plant, 5.0), &[7.0], &[100.0], plant).unwrap();
    let surplus = expost_profit(&one_hour(plant, -5.0), &[-7.0], &[100.0], plant).unwrap();
    (short.si_penalty, surplus.si_penalty)
}
