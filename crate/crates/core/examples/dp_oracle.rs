//! Schedule a price day with dynamic programming over a volume grid and
//! check a short horizon against brute-force enumeration.
//!
//! `cargo run --release --example dp_oracle`

use uphes::oracle::{action_levels, dp_schedule, enumerate_exact, DpGrid};
use uphes::plant::Plant;

fn main() -> uphes::Result<()> {
    let plant = Plant::reference()?;
    let prices: Vec<f64> = (0..24).map(|t| 60.0 + 30.0 * ((t as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin()).collect();
    for n in [21, 41, 81] {
        let grid = DpGrid::uniform(&plant, n, 7)?.with_hard_target();
        let dp = dp_schedule(&plant, &prices, &grid)?;
        println!("{n:>3} volume knots: profit {:.3}", dp.best.value);
    }

    let short = &prices[16..20];
    let actions = action_levels(3)?;
    let exact = enumerate_exact(&plant, short, &actions)?;
    let dp = dp_schedule(&plant, short, &DpGrid::reachable(&plant, actions, short.len())?)?;
    println!("4-hour peak: enumeration {:.6}, dp {:.6}", exact.value, dp.best.value);
    println!("schedule {:?}", exact.schedule);
    Ok(())
}
