//! Settle a hand-written day of pumping and generation in the nonlinear
//! simulator and print the hourly states and the profit breakdown.
//!
//! `cargo run --release --example simulate_schedule`

use uphes::plant::Plant;
use uphes::sim::evaluate_schedule;

fn main() -> uphes::Result<()> {
    let plant = Plant::reference()?;
    let prices: Vec<f64> = (0..24).map(|t| 60.0 + 30.0 * ((t as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin()).collect();
    // pump through the night, generate into the evening peak
    let schedule: Vec<f64> = prices.iter().map(|&l| if l < 45.0 { -8.0 } else if l > 75.0 { 7.0 } else { 0.0 }).collect();
    let o = evaluate_schedule(&schedule, &prices, &plant)?;
    println!("{:>4} {:>8} {:>9} {:>9} {:>8} {:>12}", "hour", "price", "asked MW", "got MW", "head m", "volume m³");
    let t = &o.trajectory;
    for h in 0..24 {
        println!("{h:>4} {:>8.2} {:>9.3} {:>9.3} {:>8.3} {:>12.1}", prices[h], schedule[h], t.power[h], t.head[h], t.volume[h]);
    }
    println!("revenue {:.2}, operating cost {:.2}, imbalance {:.2}, volume penalty {:.2}", o.revenue, o.operating_cost, o.si_penalty, o.vol_penalty);
    println!("profit {:.2}", o.profit);
    for e in &o.events {
        println!("event {e:?}");
    }
    Ok(())
}
