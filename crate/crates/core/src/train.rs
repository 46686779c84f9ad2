//! End-to-end training of the penalty network against simulated ex-post profit.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::GlobalLinearModel;
use crate::error::{Error, Result};
use crate::net::{backward, clip_grad_norm, forward, Checkpoint, FeatureMatrix, NetParams};
use crate::plant::upc::csv_io;
use crate::plant::{Mode, Plant, Role, Trajectory};
use crate::qp::{recursive_refine, refine_backward, PenaltyWeights, RefineConfig, RefineResult};
use crate::sim::{evaluate_schedule, profit_grad, SimOutcome};

pub const MAX_NOISE: f64 = 0.8;
/// Range of the per-sample level drawn in `random` mode.
pub const RANDOM_NOISE_RANGE: (f64, f64) = (0.1, 0.8);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    Fixed(f64),
    Random,
}

impl NoiseLevel {
    pub fn draw(&self, rng: &mut impl Rng) -> Result<f64> {
        match *self {
            NoiseLevel::Fixed(l) if (0.0..=MAX_NOISE).contains(&l) => Ok(l),
            NoiseLevel::Fixed(l) => Err(Error::InvalidArgument(format!("noise level {l} outside [0, {MAX_NOISE}]"))),
            NoiseLevel::Random => Ok(rng.random_range(RANDOM_NOISE_RANGE.0..=RANDOM_NOISE_RANGE.1)),
        }
    }
}

impl FromStr for NoiseLevel {
    type Err = Error;

    /// `random`, a fraction such as `0.3`, or a percentage such as `30%`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("random") {
            return Ok(NoiseLevel::Random);
        }
        let v = match s.strip_suffix('%') {
            Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
            None => s.parse::<f64>(),
        }
        .map_err(|_| Error::InvalidArgument(format!("invalid noise level {s:?}")))?;
        if !(0.0..=MAX_NOISE).contains(&v) {
            return Err(Error::InvalidArgument(format!("noise level {v} outside [0, {MAX_NOISE}]")));
        }
        Ok(NoiseLevel::Fixed(v))
    }
}

/// Perturb active powers uniformly within `±level·(envelope width)` at the
/// current head, keep each hour's mode, then recompute flows and re-integrate
/// the state. An hour whose volume would leave the admissible range falls
/// back to the baseline request, then to the smallest-flow power of its mode,
/// and only then runs idle.
pub fn perturb_schedule(plant: &Plant, baseline: &Trajectory, level: f64, seed: u64) -> Result<Trajectory> {
    baseline.validate()?;
    if !(0.0..=MAX_NOISE).contains(&level) {
        return Err(Error::InvalidArgument(format!("noise level {level} outside [0, {MAX_NOISE}]")));
    }
    if level == 0.0 {
        return Ok(baseline.clone());
    }
    let c = &plant.config;
    let (v_lo, v_hi) = plant.volume_bounds();
    let n = baseline.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = plant.idle_trajectory(n);
    out.role = Role::WarmStart;
    let (mut v, mut h) = (c.v_init, c.h_init);
    for t in 0..n {
        let u: f64 = rng.random_range(-1.0..=1.0);
        out.head[t] = h;
        out.volume[t] = v;
        let mode = baseline.mode[t];
        if !mode.is_active() {
            continue;
        }
        let (lo, hi) = plant.upc.envelope(mode, h)?;
        let weakest = if mode == Mode::Turbine { lo } else { hi };
        let candidates = [(baseline.power[t] + u * level * (hi - lo)).clamp(lo, hi), baseline.power[t].clamp(lo, hi), weakest];
        for p in candidates {
            let q = plant.upc.flow(mode, p, h)?;
            let v_new = v + c.dt * q;
            if (v_lo..=v_hi).contains(&v_new) {
                out.power[t] = p;
                out.flow[t] = q;
                out.mode[t] = mode;
                out.volume[t] = v_new;
                v = v_new;
                h = plant.head_at(v);
                break;
            }
        }
    }
    Ok(out)
}

/// Warm start paired with its price scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub scenario: String,
    pub prices: Vec<f64>,
    pub warm: Trajectory,
    pub noise: f64,
    /// Method that produced the unperturbed baseline.
    pub source: String,
}

/// Seed of variant `j` of scenario `i`.
pub fn sample_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((i as u64) << 32 | j as u64)
}

/// `variants` perturbed copies of each baseline.
pub fn build_dataset(
    plant: &Plant,
    scenarios: &[(String, Vec<f64>)],
    baselines: &[Trajectory],
    source: &str,
    noise: NoiseLevel,
    variants: usize,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    if scenarios.len() != baselines.len() {
        return Err(Error::InvalidArgument(format!("{} scenarios, {} baselines", scenarios.len(), baselines.len())));
    }
    let mut out = Vec::with_capacity(scenarios.len() * variants);
    for (i, ((id, prices), base)) in scenarios.iter().zip(baselines).enumerate() {
        for j in 0..variants {
            let s = sample_seed(seed, i, j);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let level = noise.draw(&mut rng)?;
            let warm = perturb_schedule(plant, base, level, rng.random())?;
            out.push(TrainingSample { scenario: id.clone(), prices: prices.clone(), warm, noise: level, source: source.into() });
        }
    }
    Ok(out)
}

/// Sample indices for training and validation, split by scenario.
pub fn split_by_scenario(samples: &[TrainingSample], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<&str> = samples.iter().map(|s| s.scenario.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = if ids.len() < 2 { 0 } else { ((val_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1) };
    let val_ids = &ids[..n_val];
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (i, s) in samples.iter().enumerate() {
        if val_ids.contains(&s.scenario.as_str()) {
            va.push(i);
        } else {
            tr.push(i);
        }
    }
    (tr, va)
}

/// Plant, surrogate and refinement settings shared by every sample.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub plant: &'a Plant,
    pub global: &'a GlobalLinearModel,
    pub refine: RefineConfig,
}

#[derive(Debug, Clone)]
pub struct SampleRun {
    pub weights: PenaltyWeights,
    pub refined: RefineResult,
    pub outcome: SimOutcome,
}

impl Pipeline<'_> {
    /// Refine `sample.warm` with fixed base weights and settle the result.
    pub fn refine_with(&self, prices: &[f64], warm: &Trajectory, weights: &PenaltyWeights) -> Result<(RefineResult, SimOutcome)> {
        let refined = recursive_refine(self.plant, self.global, prices, warm, weights, &self.refine)?;
        let outcome = evaluate_schedule(&refined.trajectory.power, prices, self.plant)?;
        Ok((refined, outcome))
    }

    pub fn run(&self, ck: &Checkpoint, sample: &TrainingSample) -> Result<SampleRun> {
        let weights = ck.predict(&sample.prices, &sample.warm)?;
        let (refined, outcome) = self.refine_with(&sample.prices, &sample.warm, &weights)?;
        Ok(SampleRun { weights, refined, outcome })
    }

    /// Loss `−Π` and its gradient in the network parameters.
    pub fn loss_and_grad(&self, ck: &Checkpoint, sample: &TrainingSample) -> Result<(f64, NetParams, SampleRun)> {
        let x = FeatureMatrix::assemble(&ck.norm, &sample.prices, &sample.warm)?;
        let out = forward(&ck.params, &ck.bounds, &x)?;
        let (refined, outcome) = self.refine_with(&sample.prices, &sample.warm, &out.weights)?;
        let loss = -outcome.profit;
        let n = sample.prices.len();
        let mut g = NetParams::zeros(ck.params.hidden);
        if !refined.steps.is_empty() {
            let dp = profit_grad(&refined.trajectory.power, &sample.prices, self.plant)?;
            let mut seed = vec![0.0; 4 * n];
            for t in 0..n {
                seed[t] = -dp[t];
            }
            let rg = refine_backward(&refined, &seed)?;
            g = backward(&ck.params, &out.tape, &rg.weights)?;
        }
        Ok((loss, g, SampleRun { weights: out.weights, refined, outcome }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// One update per sample in a seeded random order.
    PerSample,
    /// One update per epoch from the mean gradient.
    MeanBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub clip_norm: f64,
    pub iterations: usize,
    pub gamma: f64,
    pub seed: u64,
    pub batch: BatchMode,
    pub val_fraction: f64,
    pub hidden: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-3,
            plateau_factor: 0.5,
            plateau_patience: 5,
            early_stop_patience: 15,
            clip_norm: 1.0,
            iterations: 3,
            gamma: 2.0,
            seed: 0,
            batch: BatchMode::PerSample,
            val_fraction: 0.2,
            hidden: crate::net::DEFAULT_HIDDEN,
            w_lo: crate::net::DEFAULT_W_LO,
            w_hi: crate::net::DEFAULT_W_HI,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if self.hidden == 0 {
            return bad("hidden size must be positive");
        }
        self.refine_config().validate()
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig { iterations: self.iterations, gamma: self.gamma, ..RefineConfig::default() }
    }

    pub fn bounds(&self) -> crate::net::WeightBounds {
        crate::net::WeightBounds { w_lo: self.w_lo, w_hi: self.w_hi }
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_profit: f64,
    pub lr: f64,
    /// Mean gradient norm before clipping.
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation profit.
    pub best: Checkpoint,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Requested schedules of the training samples in the last epoch, by sample index.
    pub last_schedules: Vec<(usize, Vec<f64>)>,
    pub stopped_early: bool,
}

fn mean_profit(p: &Pipeline, ck: &Checkpoint, samples: &[TrainingSample], idx: &[usize]) -> Result<f64> {
    let mut s = 0.0;
    for &i in idx {
        s += p.run(ck, &samples[i])?.outcome.profit;
    }
    Ok(s / idx.len() as f64)
}

fn checked(i: usize, sample: &TrainingSample, r: Result<(f64, NetParams, SampleRun)>) -> Result<(f64, NetParams, SampleRun)> {
    let (loss, g, run) = r.map_err(|e| Error::Numerical(format!("sample {i} ({}): {e}", sample.scenario)))?;
    if !loss.is_finite() || g.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("sample {i} ({}, noise {:.2}): non-finite loss or gradient", sample.scenario, sample.noise)));
    }
    Ok((loss, g, run))
}

/// Train from `init`, validating on a held-out split of the scenarios.
pub fn train(p: &Pipeline, samples: &[TrainingSample], init: &Checkpoint, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let p = Pipeline { refine: cfg.refine_config(), ..*p };
    let (train_idx, val_idx) = split_by_scenario(samples, cfg.val_fraction, cfg.seed);
    let mut ck = init.clone();
    let mut adam = Adam::new(ck.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let mut lr = cfg.lr;
    let mut best = (f64::NEG_INFINITY, ck.clone(), 0usize);
    let (mut since_best, mut since_plateau) = (0usize, 0usize);
    let mut log = Vec::new();
    let mut last_schedules = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut losses = vec![0.0; samples.len()];
        let mut schedules = Vec::with_capacity(train_idx.len());
        let mut norm_sum = 0.0;
        match cfg.batch {
            BatchMode::PerSample => {
                let mut order = train_idx.clone();
                order.shuffle(&mut rng);
                for &i in &order {
                    let (loss, mut g, run) = checked(i, &samples[i], p.loss_and_grad(&ck, &samples[i]))?;
                    losses[i] = loss;
                    schedules.push((i, run.refined.trajectory.power));
                    norm_sum += clip_grad_norm(&mut g.data, cfg.clip_norm);
                    adam.step(&mut ck.params.data, &g.data, lr);
                }
            }
            BatchMode::MeanBatch => {
                let mut acc = vec![0.0; ck.params.len()];
                for &i in &train_idx {
                    let (loss, g, run) = checked(i, &samples[i], p.loss_and_grad(&ck, &samples[i]))?;
                    losses[i] = loss;
                    schedules.push((i, run.refined.trajectory.power));
                    acc.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b / train_idx.len() as f64);
                }
                norm_sum = clip_grad_norm(&mut acc, cfg.clip_norm) * train_idx.len() as f64;
                adam.step(&mut ck.params.data, &acc, lr);
            }
        }
        schedules.sort_by_key(|s| s.0);
        let loss = train_idx.iter().map(|&i| losses[i]).sum::<f64>() / train_idx.len() as f64;
        let val_profit = if val_idx.is_empty() { -loss } else { mean_profit(&p, &ck, samples, &val_idx)? };
        if !val_profit.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: non-finite validation profit")));
        }
        log.push(EpochLog {
            epoch,
            loss,
            val_profit,
            lr,
            grad_norm: norm_sum / train_idx.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
        last_schedules = schedules;
        if val_profit > best.0 {
            best = (val_profit, ck.clone(), epoch);
            since_best = 0;
            since_plateau = 0;
        } else {
            since_best += 1;
            since_plateau += 1;
            if since_plateau >= cfg.plateau_patience {
                lr *= cfg.plateau_factor;
                since_plateau = 0;
            }
            if since_best >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { best: best.1, best_epoch: best.2, last: ck, log, last_schedules, stopped_early })
}

/// `epoch,loss,val_profit,lr,grad_norm,seconds`.
pub fn write_train_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    for r in log {
        w.serialize(r).map_err(|e| Error::io(path, csv_io(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_train_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Parse { path: path.display().to_string(), line: i + 2, msg: e.to_string() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dp_schedule, DpGrid};

    fn baseline(plant: &Plant) -> Trajectory {
        let prices: Vec<f64> = (0..24).map(|t| 60.0 + 40.0 * (t as f64 * 0.5).sin()).collect();
        let dp = dp_schedule(plant, &prices, &DpGrid::default_for(plant).unwrap().with_hard_target()).unwrap();
        let mut t = dp.best.trajectory;
        t.role = Role::WarmStart;
        t
    }

    #[test]
    fn zero_noise_returns_the_baseline() {
        let plant = Plant::reference().unwrap();
        let b = baseline(&plant);
        assert_eq!(perturb_schedule(&plant, &b, 0.0, 7).unwrap(), b);
    }

    #[test]
    fn perturbation_keeps_modes_and_consistent_flows() {
        let plant = Plant::reference().unwrap();
        let b = baseline(&plant);
        for (k, level) in [0.1, 0.3, 0.5, 0.8].into_iter().enumerate() {
            let x = perturb_schedule(&plant, &b, level, k as u64).unwrap();
            assert_eq!(x.mode, b.mode);
            assert_ne!(x.power, b.power);
            for t in 0..24 {
                if x.mode[t].is_active() {
                    let q = plant.upc.flow(x.mode[t], x.power[t], x.head[t]).unwrap();
                    assert!((q - x.flow[t]).abs() <= 1e-9 * (1.0 + q.abs()));
                }
            }
            let sim = evaluate_schedule(&x.power, &[50.0; 24], &plant).unwrap();
            assert!(sim.events.is_empty(), "{:?}", sim.events);
            assert_eq!(sim.trajectory.volume, x.volume);
        }
        assert!(perturb_schedule(&plant, &b, 0.9, 0).is_err());
    }

    #[test]
    fn noise_levels_parse() {
        assert_eq!("random".parse::<NoiseLevel>().unwrap(), NoiseLevel::Random);
        assert_eq!("30%".parse::<NoiseLevel>().unwrap(), NoiseLevel::Fixed(0.3));
        assert_eq!("0.5".parse::<NoiseLevel>().unwrap(), NoiseLevel::Fixed(0.5));
        assert!("90%".parse::<NoiseLevel>().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let l = NoiseLevel::Random.draw(&mut rng).unwrap();
            assert!((0.1..=0.8).contains(&l));
        }
    }

    #[test]
    fn split_keeps_scenarios_together() {
        let plant = Plant::reference().unwrap();
        let b = baseline(&plant);
        let sc: Vec<(String, Vec<f64>)> = (0..10).map(|i| (format!("s{i}"), vec![50.0; 24])).collect();
        let ds = build_dataset(&plant, &sc, &vec![b; 10], "dp", NoiseLevel::Random, 3, 1).unwrap();
        let (tr, va) = split_by_scenario(&ds, 0.2, 4);
        assert_eq!(va.len(), 6);
        assert_eq!(tr.len(), 24);
        for &i in &va {
            assert!(tr.iter().all(|&j| ds[j].scenario != ds[i].scenario));
        }
        assert_eq!(split_by_scenario(&ds, 0.2, 4), (tr, va));
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut a = Adam::new(2);
        let mut x = vec![1.0, -1.0];
        a.step(&mut x, &[2.0, -3.0], 0.1);
        assert!((x[0] - 0.9).abs() < 1e-6 && (x[1] + 0.9).abs() < 1e-6);
        let mut y = vec![1.0];
        Adam::new(1).step(&mut y, &[5.0], 0.0);
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        assert!(TrainConfig { clip_norm: 0.0, ..ok }.validate().is_err());
        assert!(TrainConfig { plateau_factor: 1.0, ..ok }.validate().is_err());
        assert!(TrainConfig { iterations: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn train_log_round_trips() {
        let log = vec![EpochLog { epoch: 1, loss: -1234.5, val_profit: 1200.25, lr: 1e-3, grad_norm: 0.3, seconds: 1.5 }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        write_train_log(&p, &log).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epoch,loss,val_profit,lr,grad_norm,seconds\n"));
        assert_eq!(read_train_log(&p).unwrap(), log);
    }
}
