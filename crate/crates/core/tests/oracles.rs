mod common;

use std::collections::HashMap;

use common::*;
use rand::Rng;

use uphes::approx::{build_sos2_grid, fit_global, GlobalSampling, Sos2Grid};
use uphes::mip::{big_m_floor, build_miqp_gl, build_miqp_pw, solve_enumerated, EnumLimits, MipModel};
use uphes::oracle::{action_levels, dp_schedule, enumerate_exact, DpGrid};
use uphes::plant::{Mode, Plant};

#[test]
fn dp_matches_enumeration_on_twenty_random_instances() {
    let bad = checks::dp_enumeration_mismatches(&plant(), 20);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn dp_on_a_coarse_grid_never_beats_enumeration() {
    let plant = plant();
    let mut rng = rng(8);
    for _ in 0..10 {
        let prices: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..200.0)).collect();
        let actions = action_levels(3).unwrap();
        let exact = enumerate_exact(&plant, &prices, &actions).unwrap();
        let grid = DpGrid::new(&plant, vec![plant.volume_bounds().0, plant.volume_bounds().1], actions).unwrap();
        assert!(dp_schedule(&plant, &prices, &grid).unwrap().best.value <= exact.value);
    }
}

#[test]
fn doubling_the_volume_grid_raises_the_mean_value() {
    let plant = plant();
    let (mut coarse, mut fine) = (0.0, 0.0);
    for s in 0..10u64 {
        let prices: Vec<f64> =
            (0..24).map(|t| 60.0 + 35.0 * ((t as f64 + s as f64 * 0.7) / 24.0 * std::f64::consts::TAU).sin() + ((s * 31 + t as u64 * 17) % 23) as f64).collect();
        let c = dp_schedule(&plant, &prices, &DpGrid::uniform(&plant, 21, 7).unwrap()).unwrap().best.value;
        let f = dp_schedule(&plant, &prices, &DpGrid::uniform(&plant, 41, 7).unwrap()).unwrap().best.value;
        // interpolated values can mislead the finer policy slightly on single days
        assert!(f >= c * (1.0 - 5e-3), "day {s}: {f} < {c}");
        coarse += c;
        fine += f;
    }
    assert!(fine > coarse, "{fine} <= {coarse}");
}

#[test]
fn two_hour_global_linear_optimum_matches_the_grid_oracle() {
    let bad = checks::gl_two_hour_violations(&plant());
    assert!(bad.is_empty(), "{bad:#?}");
}

/// Every hour picks a mode and a power column; the head interpolates between
/// knots, so the weights of that column reproduce the tabulated samples.
struct Vertex {
    objective: f64,
    x: Vec<f64>,
    pq: Vec<(f64, f64)>,
}

fn pw_vertex(plant: &Plant, grid: &Sos2Grid, model: &MipModel, prices: &[f64], choice: &[(Mode, usize)]) -> Option<Vertex> {
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let idx: HashMap<&str, usize> = model.name_index();
    let mut x = vec![0.0; model.n_vars()];
    let mut set = |name: String, val: f64| x[idx[name.as_str()]] = val;
    let n_h = grid.heads.len();
    let mut v = c.v_init;
    let mut pq = Vec::new();
    for (t, &(mode, j)) in choice.iter().enumerate() {
        // head weights from the previous volume on the piecewise-linear knot curve
        let k = (0..n_h - 1).find(|&i| {
            let (a, b) = (grid.volumes[i], grid.volumes[i + 1]);
            v >= a.min(b) - 1e-9 && v <= a.max(b) + 1e-9
        })?;
        let s = ((v - grid.volumes[k]) / (grid.volumes[k + 1] - grid.volumes[k])).clamp(0.0, 1.0);
        let w = [(k, 1.0 - s), (k + 1, s)];
        let h: f64 = w.iter().map(|&(i, a)| a * grid.heads[i]).sum();
        for &(i, a) in &w {
            set(format!("wvh_{t}_{i}"), a);
        }
        set(format!("h_{t}"), h);
        let (zn, tag) = match mode {
            Mode::Idle => ("I", ""),
            Mode::Turbine => ("T", "T"),
            Mode::Pump => ("P", "P"),
        };
        set(format!("z{zn}_{t}"), 1.0);
        let (mut p, mut q) = (0.0, 0.0);
        if mode != Mode::Idle {
            let tb = grid.table(mode).unwrap();
            if j >= tb.n_powers() {
                return None;
            }
            for &(i, a) in &w {
                set(format!("w{tag}_{t}_{i}_{j}"), a);
                set(format!("y{tag}_{t}_{i}"), a);
                p += a * tb.powers[i][j];
                q += a * tb.flows[i][j];
            }
            set(format!("p{tag}_{t}"), p);
            set(format!("q{tag}_{t}"), q);
        } else if j > 0 {
            return None;
        }
        v += c.dt * q;
        if !(v_lo..=v_hi).contains(&v) {
            return None;
        }
        set(format!("v_{t}"), v);
        pq.push((p, q));
    }
    if v > c.v_target {
        return None;
    }
    let dt_h = c.dt_hours();
    let objective = pq.iter().zip(prices).map(|(&(p, _), l)| -dt_h * l * p + dt_h * c.c_op * p * p).sum();
    Some(Vertex { objective, x, pq })
}

fn pw_choices(grid: &Sos2Grid, horizon: usize) -> Vec<Vec<(Mode, usize)>> {
    let mut per_hour = vec![(Mode::Idle, 0)];
    per_hour.extend((0..grid.turbine.n_powers()).map(|j| (Mode::Turbine, j)));
    per_hour.extend((0..grid.pump.n_powers()).map(|j| (Mode::Pump, j)));
    let mut out = vec![vec![]];
    for _ in 0..horizon {
        out = out.iter().flat_map(|pre| per_hour.iter().map(move |&c| [pre.clone(), vec![c]].concat())).collect();
    }
    out
}

#[test]
fn one_hot_vertices_reproduce_the_stored_samples() {
    let plant = plant();
    let grid = build_sos2_grid(&plant, 3, 3, 3).unwrap();
    let prices = [20.0, 140.0];
    let model = build_miqp_pw(&prices, &grid, &plant).unwrap();
    let mut feasible = 0;
    for choice in pw_choices(&grid, 2) {
        let Some(vx) = pw_vertex(&plant, &grid, &model, &prices, &choice) else { continue };
        feasible += 1;
        assert!(model.max_violation(&vx.x) < 1e-6, "{choice:?}: violation {}", model.max_violation(&vx.x));
        assert!(rel_err(model.objective_value(&vx.x), vx.objective, 1.0) < 1e-8);
        // at the initial head knot a one-hot column is exactly the stored sample
        let (mode, j) = choice[0];
        if mode != Mode::Idle && grid.heads.contains(&plant.config.h_init) {
            let i = grid.heads.iter().position(|&h| h == plant.config.h_init).unwrap();
            let tb = grid.table(mode).unwrap();
            assert_eq!(vx.pq[0], (tb.powers[i][j], tb.flows[i][j]));
        }
    }
    assert!(feasible >= 10, "only {feasible} feasible vertex schedules");
}

#[test]
fn two_hour_piecewise_optimum_is_at_least_the_best_vertex() {
    let plant = plant();
    let grid = build_sos2_grid(&plant, 3, 3, 3).unwrap();
    for prices in [[20.0, 140.0], [60.0, 65.0]] {
        let model = build_miqp_pw(&prices, &grid, &plant).unwrap();
        let best = pw_choices(&grid, 2)
            .iter()
            .filter_map(|c| pw_vertex(&plant, &grid, &model, &prices, c))
            .map(|v| v.objective)
            .fold(f64::INFINITY, f64::min);
        let sol = solve_enumerated(&model, &EnumLimits::default()).unwrap();
        assert!(sol.violation < 1e-6);
        assert!(sol.objective <= best + 1e-6 * best.abs().max(1.0), "{prices:?}: {} vs vertex {best}", sol.objective);
    }
}

#[test]
fn idle_only_model_has_zero_optimum() {
    let plant = plant();
    let g = fit_global(&plant, GlobalSampling::default()).unwrap();
    let mut model = build_miqp_gl(&[50.0], &g, &plant, 2.0 * big_m_floor(&g, plant.config.h_min, plant.config.h_max)).unwrap();
    for name in ["zT_0", "zP_0"] {
        let j = model.var_index(name).unwrap();
        model.vars[j].upper = 0.0;
    }
    let sol = solve_enumerated(&model, &EnumLimits::default()).unwrap();
    assert!(sol.objective.abs() < 1e-9);
}
