//! Synthesize flow samples for the reference plant and fit degree-5 unit
//! performance curves.
//!
//! `cargo run --release --example fit_performance_curves`

use uphes::plant::{synth_upc_dataset, upc_fit, Mode, PlantConfig, SynthUpcSpec};

fn main() -> uphes::Result<()> {
    let config = PlantConfig::default();
    let samples = synth_upc_dataset(&config, &SynthUpcSpec::default())?;
    let model = upc_fit(&samples, 5)?;
    println!("{} samples", samples.len());
    println!("turbine R² {:.6}, pump R² {:.6}", model.turbine.r2, model.pump.r2);
    for h in [config.h_min, 0.5 * (config.h_min + config.h_max), config.h_max] {
        let (lo, hi) = model.envelope(Mode::Turbine, h)?;
        let q = model.flow(Mode::Turbine, 0.5 * (lo + hi), h)?;
        println!("head {h:>5.1} m: turbine envelope [{lo:.2}, {hi:.2}] MW, flow at midpoint {q:.3} m³/s");
    }
    Ok(())
}
