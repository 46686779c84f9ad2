//! Train the penalty network on a few clustered days and compare it with the
//! raw warm start and the fixed-weight ablations.
//!
//! `cargo run --release --example train_and_evaluate`

use uphes::data::{kmedoids, synthetic_prices};
use uphes::eval::{evaluate, summarize};
use uphes::run::{dp_baselines, eval_cases, RunConfig};
use uphes::train::train;

fn main() -> uphes::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.experiment.variants = 3;
    cfg.train.epochs = 15;
    let plant = cfg.plant(None)?;
    let global = cfg.global(&plant)?;
    let sets = kmedoids(&synthetic_prices(&cfg.prices, 0)?, 6, 0)?.scenarios;

    let samples = cfg.training_set(&plant, &sets, cfg.train.seed)?;
    let p = cfg.pipeline(&plant, &global);
    let outcome = train(&p, &samples, &cfg.init_checkpoint(&plant)?, &cfg.train)?;
    for e in &outcome.log {
        println!("epoch {:>3}  loss {:>9.2}  validation profit {:>9.2}  lr {:.1e}", e.epoch, e.loss, e.val_profit, e.lr);
    }
    println!("best epoch {}", outcome.best_epoch);

    let baselines = dp_baselines(&plant, &sets, &cfg.dp_grid(&plant)?)?;
    let cases = eval_cases(&plant, &sets, &baselines, &[0.3], cfg.experiment.eval_seed)?;
    for name in ["raw", "no_nn", "no_rec", "dfl"] {
        let s = summarize(&evaluate(&p, &cfg.method(name, &plant, Some(&outcome.best))?, &cases)?)?;
        println!("{:<7} {:>10.2} ± {:>8.2}  {:.3} s/case", s.method, s.profit_mean, s.profit_std, s.time_s);
    }
    Ok(())
}
