//! Generate a synthetic year of hourly prices and reduce it to
//! representative days with k-medoids.
//!
//! `cargo run --release --example cluster_prices -- out_dir`

use std::path::PathBuf;

use uphes::data::{kmedoids, synthetic_prices, SyntheticPrices};

fn main() -> uphes::Result<()> {
    let history = synthetic_prices(&SyntheticPrices::default(), 0)?;
    let c = kmedoids(&history, 19, 0)?;
    println!("{} days, cost {:.1} after build, {:.1} after {} swaps", history.len(), c.cost_history[0], c.cost_history.last().unwrap(), c.cost_history.len() - 1);
    for s in &c.scenarios {
        let (lo, hi) = s.prices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        println!("{}  weight {:>3}  range [{lo:>6.1}, {hi:>6.1}]", s.id, s.weight);
    }
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        c.save(&dir, &history)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
