use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uphes::data::{kmedoids, load_prices, synthetic_prices, PriceFormat};
use uphes::eval::{evaluate, summarize, write_case_results, write_method_report, write_noise_curve};
use uphes::mip::{export_model, Formulation, SolverShim};
use uphes::net::Checkpoint;
use uphes::plant::upc::{read_samples, write_samples};
use uphes::plant::{synth_upc_dataset, upc_fit};
use uphes::run::{dp_baselines, eval_cases, load_price_sets, pick_scenario, schedule_scenario, RunConfig, ScheduleMethod};
use uphes::train::{train, write_train_log};
use uphes::{Error, Result};

#[derive(Parser)]
#[command(name = "uphes", version, about = "Day-ahead scheduling for underground pumped-hydro storage")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit performance-curve polynomials to flow samples.
    FitUpc {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 5)]
        degree: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic performance-curve dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic hourly price history.
    GenPrices {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce a price history to representative days.
    Cluster {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, default_value_t = 19)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Schedule one price day and write the settled schedule as JSON.
    Schedule {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Scenario file, scenario directory or price history.
        #[arg(long)]
        prices: PathBuf,
        /// Scenario id or date; the first one when omitted.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_parser = parse_method)]
        method: ScheduleMethod,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the penalty network on perturbed warm starts.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        /// `random`, a fraction or a percentage.
        #[arg(long)]
        noise: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare methods over scenarios and noise levels.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scenarios: PathBuf,
        /// Comma-separated subset of raw, no_nn, no_rec, dfl, dp.
        #[arg(long, value_delimiter = ',', default_value = "raw,no_nn,no_rec,dfl")]
        methods: Vec<String>,
        /// Training output directory or checkpoint file.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the mixed-integer baseline for one price day in MPS format.
    ExportMip {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_parser = parse_formulation)]
        formulation: Formulation,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> std::result::Result<ScheduleMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_formulation(s: &str) -> std::result::Result<Formulation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(&if path.is_dir() { path.join("checkpoint.json") } else { path.to_path_buf() })
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::FitUpc { samples, degree, out } => {
            let model = upc_fit(&read_samples(&samples)?, degree)?;
            model.save(&out)?;
            println!("turbine r2 {:.6}", model.turbine.r2);
            println!("pump r2 {:.6}", model.pump.r2);
        }
        Cmd::GenData { config, seed, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let mut spec = cfg.upc_spec();
            spec.seed = seed.unwrap_or(spec.seed);
            write_samples(&out, &synth_upc_dataset(&cfg.plant, &spec)?)?;
        }
        Cmd::GenPrices { config, days, seed, out } => {
            let mut spec = RunConfig::load_or_default(config.as_deref())?.prices;
            spec.days = days.unwrap_or(spec.days);
            synthetic_prices(&spec, seed)?.save(&out)?;
        }
        Cmd::Cluster { prices, k, seed, out } => {
            let history = load_prices(&prices, PriceFormat::Auto)?;
            let c = kmedoids(&history, k, seed)?;
            c.save(&out, &history)?;
            eprintln!("{} days into {} scenarios, cost {:.3}", history.len(), k, c.cost_history.last().copied().unwrap_or(0.0));
        }
        Cmd::Schedule { config, model, prices, scenario, method, checkpoint, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let plant = cfg.plant(model.as_deref())?;
            let s = pick_scenario(&load_price_sets(&prices)?, scenario.as_deref())?;
            let ck = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let file = schedule_scenario(&cfg, &plant, method, &s, ck.as_ref(), SolverShim::from_env().as_ref())?;
            file.save(&out)?;
            println!("{} {} profit {:.6}", method.name(), s.id, file.profit.profit);
        }
        Cmd::Train { config, model, scenarios, noise, seed, out } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            if let Some(n) = noise {
                cfg.experiment.noise = n;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let plant = cfg.plant(model.as_deref())?;
            let global = cfg.global(&plant)?;
            let sets = load_price_sets(&scenarios)?;
            let samples = cfg.training_set(&plant, &sets, cfg.train.seed)?;
            let outcome = train(&cfg.pipeline(&plant, &global), &samples, &cfg.init_checkpoint(&plant)?, &cfg.train)?;
            create_dir(&out)?;
            outcome.best.save(&out.join("checkpoint.json"))?;
            write_train_log(&out.join("train_log.csv"), &outcome.log)?;
            cfg.save(&out.join("config.toml"))?;
            let best = outcome.log.iter().find(|l| l.epoch == outcome.best_epoch).map_or(f64::NAN, |l| l.val_profit);
            println!("best epoch {} validation profit {best:.3} of {} epochs", outcome.best_epoch, outcome.log.len());
        }
        Cmd::Evaluate { config, model, scenarios, methods, checkpoint, seed, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let plant = cfg.plant(model.as_deref())?;
            let global = cfg.global(&plant)?;
            let ck = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let methods = methods.iter().map(|m| cfg.method(m.trim(), &plant, ck.as_ref())).collect::<Result<Vec<_>>>()?;
            let sets = load_price_sets(&scenarios)?;
            let baselines = dp_baselines(&plant, &sets, &cfg.dp_grid(&plant)?)?;
            let cases = eval_cases(&plant, &sets, &baselines, &cfg.experiment.noise_levels, seed.unwrap_or(cfg.experiment.eval_seed))?;
            let p = cfg.pipeline(&plant, &global);
            let (mut all, mut table) = (Vec::new(), Vec::new());
            for m in &methods {
                let res = evaluate(&p, m, &cases)?;
                let s = summarize(&res)?;
                println!("{:<7} {:>12.3} {:>10.3} {:>9.4}s", s.method, s.profit_mean, s.profit_std, s.time_s);
                table.push(s);
                all.extend(res);
            }
            create_dir(&out)?;
            write_method_report(&out.join("methods.csv"), &table)?;
            write_noise_curve(&out.join("noise_curve.csv"), &all)?;
            write_case_results(&out.join("cases.csv"), &all)?;
        }
        Cmd::ExportMip { config, model, formulation, prices, scenario, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let plant = cfg.plant(model.as_deref())?;
            let s = pick_scenario(&load_price_sets(&prices)?, scenario.as_deref())?;
            let m = cfg.build_mip(&plant, formulation, &s.prices)?;
            export_model(&m, &out)?;
            eprintln!("{} variables, {} rows, {} SOS2 groups", m.n_vars(), m.rows.len(), m.sos2.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
