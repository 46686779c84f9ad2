#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uphes::data::{kmedoids, synthetic_prices, PriceScenario, SyntheticPrices};
use uphes::plant::{Plant, Trajectory};
use uphes::sim::simulate;

pub fn plant() -> Plant {
    Plant::reference().unwrap()
}

/// Smooth daily profile with a cheap night and an evening peak.
pub fn day_prices(n: usize) -> Vec<f64> {
    (0..n).map(|t| 60.0 + 30.0 * ((t as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin()).collect()
}

/// Pump below 45, generate above 75, idle otherwise.
pub fn threshold_schedule(prices: &[f64]) -> Vec<f64> {
    prices.iter().map(|&l| if l < 45.0 { -8.0 } else if l > 75.0 { 7.0 } else { 0.0 }).collect()
}

pub fn warm_start(plant: &Plant, prices: &[f64]) -> Trajectory {
    simulate(&threshold_schedule(prices), plant).unwrap().trajectory
}

/// The representative days of one synthetic year.
pub fn clustered_scenarios(k: usize, seed: u64) -> Vec<PriceScenario> {
    let history = synthetic_prices(&SyntheticPrices::default(), seed).unwrap();
    kmedoids(&history, k, seed).unwrap().scenarios
}

pub fn random_schedule(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => 0.0,
            1 => rng.random_range(0.0..12.0),
            _ => -rng.random_range(0.0..12.0),
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
