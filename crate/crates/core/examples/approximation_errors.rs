//! Compare the global affine surrogate with the piecewise-bilinear grid
//! against the nonlinear plant and write the error table.
//!
//! `cargo run --release --example approximation_errors -- errors.csv`

use std::path::PathBuf;

use uphes::approx::{approx_error_report, build_sos2_grid, fit_global, write_error_report, GlobalSampling, OperatingPoint};
use uphes::plant::{Mode, Plant};

fn main() -> uphes::Result<()> {
    let plant = Plant::reference()?;
    let global = fit_global(&plant, GlobalSampling::default())?;
    let grid = build_sos2_grid(&plant, 10, 10, 10)?;
    let (lo, hi) = (plant.config.h_min, plant.config.h_max);
    let mut points = Vec::new();
    for mode in [Mode::Turbine, Mode::Pump] {
        for i in 0..25 {
            let h = lo + (hi - lo) * i as f64 / 24.0;
            let (p_lo, p_hi) = plant.upc.envelope(mode, h)?;
            points.extend((0..25).map(|j| OperatingPoint { mode, p: p_lo + (p_hi - p_lo) * j as f64 / 24.0, h }));
        }
    }
    let rows = approx_error_report(&plant, &global, &grid, &points)?;
    println!("{:<5} {:<20} {:>9} {:>9} {:>9}", "fn", "method", "mape %", "max %", "R²");
    for r in &rows {
        println!("{:<5} {:<20} {:>9.3} {:>9.3} {:>9.5}", r.function, r.method, r.mape_pct, r.max_pct, r.r2);
    }
    if let Some(path) = std::env::args().nth(1).map(PathBuf::from) {
        write_error_report(&path, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
