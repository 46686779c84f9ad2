//! Build the global-linear and piecewise-bilinear mixed-integer baselines,
//! write them in MPS format and solve a two-hour instance by enumeration.
//!
//! `cargo run --release --example export_mip -- out_dir`

use std::path::PathBuf;

use uphes::approx::{build_sos2_grid, fit_global, GlobalSampling};
use uphes::mip::{big_m_floor, build_miqp_gl, build_miqp_pw, export_model, solve_enumerated, EnumLimits};
use uphes::plant::Plant;

fn main() -> uphes::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| uphes::Error::io(&dir, e))?;
    let plant = Plant::reference()?;
    let global = fit_global(&plant, GlobalSampling::default())?;
    let big_m = 2.0 * big_m_floor(&global, plant.config.h_min, plant.config.h_max);
    let prices: Vec<f64> = (0..24).map(|t| 60.0 + 30.0 * ((t as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin()).collect();

    let gl = build_miqp_gl(&prices, &global, &plant, big_m)?;
    let pw = build_miqp_pw(&prices, &build_sos2_grid(&plant, 10, 10, 10)?, &plant)?;
    for (name, m) in [("gl.mps", &gl), ("pw.mps", &pw)] {
        let path = dir.join(name);
        export_model(m, &path)?;
        println!("{}: {} variables, {} rows, {} SOS2 groups", path.display(), m.n_vars(), m.rows.len(), m.sos2.len());
    }

    let two = [20.0, 140.0];
    let sol = solve_enumerated(&build_miqp_gl(&two, &global, &plant, big_m)?, &EnumLimits::default())?;
    let small = build_miqp_pw(&two, &build_sos2_grid(&plant, 3, 3, 3)?, &plant)?;
    let pw_sol = solve_enumerated(&small, &EnumLimits::default())?;
    println!("two hours at {two:?}: GL objective {:.4}, PW objective {:.4}, PW schedule {:?}", sol.objective, pw_sol.objective, pw_sol.schedule(&small)?);
    Ok(())
}
