//! Perturb a dynamic-programming schedule, refine it with three penalized QP
//! passes and back-propagate the simulated profit to the penalty weights.
//!
//! `cargo run --release --example refine_warm_start -- 0.3`

use uphes::approx::{fit_global, GlobalSampling};
use uphes::oracle::{dp_schedule, DpGrid};
use uphes::plant::Plant;
use uphes::qp::{recursive_refine, refine_backward, PenaltyWeights, RefineConfig};
use uphes::sim::{evaluate_schedule, profit_grad};
use uphes::train::perturb_schedule;

fn main() -> uphes::Result<()> {
    let noise: f64 = std::env::args().nth(1).map_or(0.3, |s| s.parse().expect("noise fraction"));
    let plant = Plant::reference()?;
    let global = fit_global(&plant, GlobalSampling::default())?;
    let prices: Vec<f64> = (0..24).map(|t| 60.0 + 30.0 * ((t as f64 - 6.0) / 24.0 * std::f64::consts::TAU).sin()).collect();
    let baseline = dp_schedule(&plant, &prices, &DpGrid::default_for(&plant)?.with_hard_target())?.best.trajectory;
    let warm = perturb_schedule(&plant, &baseline, noise, 7)?;

    let weights = PenaltyWeights::uniform(24, 5.0);
    let res = recursive_refine(&plant, &global, &prices, &warm, &weights, &RefineConfig::default())?;
    let before = evaluate_schedule(&warm.power, &prices, &plant)?.profit;
    let after = evaluate_schedule(&res.trajectory.power, &prices, &plant)?.profit;
    println!("dp baseline {:.2}", evaluate_schedule(&baseline.power, &prices, &plant)?.profit);
    println!("warm start at {:.0}% noise {before:.2}, refined {after:.2}", 100.0 * noise);
    for (k, (s, n)) in res.steps.iter().zip(res.step_norms()).enumerate() {
        println!("pass {k}: weight scale {:.0}, {} IPM iterations, step norm {n:.4}", s.scale, s.solution.iterations);
    }

    // d(−profit)/dp seeds the reverse sweep; flow, head and volume entries stay zero
    let g = profit_grad(&res.trajectory.power, &prices, &plant)?;
    let mut seed = vec![0.0; 96];
    for t in 0..24 {
        seed[t] = -g[t];
    }
    let back = refine_backward(&res, &seed)?;
    let top = back.weights.w_p.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    println!("largest power-weight sensitivity at hour {}: {:.4e}", top.0, top.1);
    Ok(())
}
