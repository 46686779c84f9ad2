//! Run configuration and the pipeline stages the command-line tool composes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::approx::{build_sos2_grid, fit_global, GlobalLinearModel, GlobalSampling, Sos2Grid};
use crate::data::{load_prices, load_scenarios, PriceFormat, PriceScenario, SyntheticPrices};
use crate::error::{Error, Result};
use crate::data::ScheduleFile;
use crate::eval::{method_schedule, EvalCase, Method};
use crate::sim::evaluate_schedule;
use crate::mip::{big_m_floor, build_miqp_gl, build_miqp_pw, solve_enumerated, EnumLimits, Formulation, MipModel, MipSolution, SolverShim};
use crate::oracle::{dp_schedule, DpGrid};
use crate::plant::{synth_upc_dataset, upc_fit, Plant, PlantConfig, Role, SynthUpcSpec, Trajectory, UpcModel};
use crate::net::{init_params, Checkpoint, FeatureNorm};
use crate::train::{build_dataset, perturb_schedule, NoiseLevel, Pipeline, TrainConfig, TrainingSample, MAX_NOISE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpcDataConfig {
    pub n_heads: usize,
    pub n_powers: usize,
    /// Relative Gaussian noise on synthetic flows.
    pub noise_rel: f64,
    pub seed: u64,
    pub degree: usize,
}

impl Default for UpcDataConfig {
    fn default() -> Self {
        let s = SynthUpcSpec::default();
        UpcDataConfig { n_heads: s.n_heads, n_powers: s.n_powers, noise_rel: s.noise_rel, seed: s.seed, degree: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Samples per axis of the global affine fits.
    pub global_samples: usize,
    /// Knots of the piecewise-bilinear grid.
    pub sos2_heads: usize,
    pub sos2_turbine: usize,
    pub sos2_pump: usize,
    pub dp_volumes: usize,
    /// Power levels per active mode in the dynamic program.
    pub dp_levels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { global_samples: 30, sos2_heads: 10, sos2_turbine: 10, sos2_pump: 10, dp_volumes: 41, dp_levels: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MipConfig {
    /// Linking constant of the global-linear model; twice the smallest valid value when unset.
    pub big_m: Option<f64>,
    pub max_subproblems: usize,
}

impl Default for MipConfig {
    fn default() -> Self {
        MipConfig { big_m: None, max_subproblems: EnumLimits::default().max_subproblems }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of representative days.
    pub k: usize,
    /// Perturbed warm starts per scenario in the training set.
    pub variants: usize,
    /// `random` or a fixed fraction.
    pub noise: String,
    pub noise_levels: Vec<f64>,
    /// Base seed of the evaluation warm starts.
    pub eval_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { k: 19, variants: 8, noise: "random".into(), noise_levels: vec![0.1, 0.3, 0.5, 0.8], eval_seed: 1000 }
    }
}

/// Everything a run needs besides its input files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub upc: UpcDataConfig,
    pub prices: SyntheticPrices,
    pub grids: GridConfig,
    pub mip: MipConfig,
    pub experiment: ExperimentConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.span().map(|s| 1 + text[..s.start].matches('\n').count()).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when no file is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.train.validate()?;
        self.noise()?;
        let e = &self.experiment;
        if e.k == 0 || e.variants == 0 {
            return Err(Error::Config("k and variants must be positive".into()));
        }
        if e.noise_levels.is_empty() || e.noise_levels.iter().any(|l| !(0.0..=MAX_NOISE).contains(l)) {
            return Err(Error::Config(format!("noise levels must be non-empty and lie in [0, {MAX_NOISE}]")));
        }
        if matches!(self.mip.big_m, Some(m) if !(m.is_finite() && m > 0.0)) {
            return Err(Error::Config("big_m must be positive".into()));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseLevel> {
        self.experiment.noise.parse()
    }

    pub fn upc_spec(&self) -> SynthUpcSpec {
        SynthUpcSpec { n_heads: self.upc.n_heads, n_powers: self.upc.n_powers, noise_rel: self.upc.noise_rel, seed: self.upc.seed, ..SynthUpcSpec::default() }
    }

    /// Plant with the surrogate from `model`, or fitted to the configured synthetic data.
    pub fn plant(&self, model: Option<&Path>) -> Result<Plant> {
        let upc = match model {
            Some(p) => UpcModel::load(p)?,
            None => upc_fit(&synth_upc_dataset(&self.plant, &self.upc_spec())?, self.upc.degree)?,
        };
        Plant::new(self.plant.clone(), upc)
    }

    pub fn global(&self, plant: &Plant) -> Result<GlobalLinearModel> {
        let n = self.grids.global_samples;
        fit_global(plant, GlobalSampling { n_heads: n, n_powers: n, n_volumes: n })
    }

    pub fn sos2(&self, plant: &Plant) -> Result<Sos2Grid> {
        let g = &self.grids;
        build_sos2_grid(plant, g.sos2_heads, g.sos2_turbine, g.sos2_pump)
    }

    /// Dynamic-programming grid with the terminal target enforced.
    pub fn dp_grid(&self, plant: &Plant) -> Result<DpGrid> {
        Ok(DpGrid::uniform(plant, self.grids.dp_volumes, self.grids.dp_levels)?.with_hard_target())
    }

    pub fn build_mip(&self, plant: &Plant, formulation: Formulation, prices: &[f64]) -> Result<MipModel> {
        match formulation {
            Formulation::Gl => {
                let global = self.global(plant)?;
                let big_m = self.mip.big_m.unwrap_or_else(|| 2.0 * big_m_floor(&global, plant.config.h_min, plant.config.h_max));
                build_miqp_gl(prices, &global, plant, big_m)
            }
            Formulation::Pw => build_miqp_pw(prices, &self.sos2(plant)?, plant),
        }
    }

    pub fn pipeline<'a>(&self, plant: &'a Plant, global: &'a GlobalLinearModel) -> Pipeline<'a> {
        Pipeline { plant, global, refine: self.train.refine_config() }
    }

    /// Untrained network seeded from `train.seed`.
    pub fn init_checkpoint(&self, plant: &Plant) -> Result<Checkpoint> {
        let bounds = self.train.bounds();
        let params = init_params(self.train.hidden, &bounds, self.train.seed)?;
        Ok(Checkpoint::new(FeatureNorm::from_plant(plant)?, bounds, params))
    }

    /// Perturbed dynamic-programming warm starts for every scenario.
    pub fn training_set(&self, plant: &Plant, sets: &[PriceScenario], seed: u64) -> Result<Vec<TrainingSample>> {
        let baselines = dp_baselines(plant, sets, &self.dp_grid(plant)?)?;
        build_dataset(plant, &scenario_pairs(sets), &baselines, "dp", self.noise()?, self.experiment.variants, seed)
    }

    /// Evaluation method by report name; `no_rec` and `dfl` need a checkpoint.
    pub fn method(&self, name: &str, plant: &Plant, checkpoint: Option<&Checkpoint>) -> Result<Method> {
        let ck = || checkpoint.cloned().ok_or_else(|| Error::InvalidArgument(format!("method {name} needs a checkpoint")));
        match name {
            "raw" => Ok(Method::Raw),
            "no_nn" => Ok(Method::NoNn(self.train.bounds())),
            "no_rec" => Ok(Method::NoRec(ck()?)),
            "dfl" => Ok(Method::Dfl(ck()?)),
            "dp" => Ok(Method::Dp(self.dp_grid(plant)?)),
            _ => Err(Error::InvalidArgument(format!("unknown method {name:?}, expected raw, no_nn, no_rec, dfl or dp"))),
        }
    }
}

/// Schedulers of the `schedule` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMethod {
    Dp,
    GlMps,
    PwMps,
    Dfl,
}

impl ScheduleMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleMethod::Dp => "dp",
            ScheduleMethod::GlMps => "gl-mps",
            ScheduleMethod::PwMps => "pw-mps",
            ScheduleMethod::Dfl => "dfl",
        }
    }
}

impl std::str::FromStr for ScheduleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dp" => Ok(ScheduleMethod::Dp),
            "gl-mps" => Ok(ScheduleMethod::GlMps),
            "pw-mps" => Ok(ScheduleMethod::PwMps),
            "dfl" => Ok(ScheduleMethod::Dfl),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}, expected dp, gl-mps, pw-mps or dfl"))),
        }
    }
}

/// Schedule one scenario and settle it in the simulator. `dfl` refines the
/// dynamic-programming schedule with weights from `checkpoint`.
pub fn schedule_scenario(
    cfg: &RunConfig,
    plant: &Plant,
    method: ScheduleMethod,
    scenario: &PriceScenario,
    checkpoint: Option<&Checkpoint>,
    shim: Option<&SolverShim>,
) -> Result<ScheduleFile> {
    let sched = match method {
        ScheduleMethod::Dp => dp_schedule(plant, &scenario.prices, &cfg.dp_grid(plant)?)?.best.schedule,
        ScheduleMethod::GlMps | ScheduleMethod::PwMps => {
            let f = if method == ScheduleMethod::GlMps { Formulation::Gl } else { Formulation::Pw };
            let model = cfg.build_mip(plant, f, &scenario.prices)?;
            solve_mip(&model, shim, cfg.mip.max_subproblems)?.schedule(&model)?
        }
        ScheduleMethod::Dfl => {
            let global = cfg.global(plant)?;
            let warm = dp_baselines(plant, std::slice::from_ref(scenario), &cfg.dp_grid(plant)?)?.remove(0);
            let case = EvalCase { scenario: scenario.id.clone(), noise: 0.0, prices: scenario.prices.clone(), warm };
            method_schedule(&cfg.pipeline(plant, &global), &cfg.method("dfl", plant, checkpoint)?, &case)?.0
        }
    };
    let outcome = evaluate_schedule(&sched, &scenario.prices, plant)?;
    Ok(ScheduleFile::from_outcome(method.name(), &scenario.id, &outcome))
}

/// Solve with the external shim when one is given, else by enumeration.
pub fn solve_mip(model: &MipModel, shim: Option<&SolverShim>, max_subproblems: usize) -> Result<MipSolution> {
    match shim {
        Some(s) => {
            let dir = std::env::temp_dir().join(format!("uphes-mip-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let out = s.solve(model, &dir);
            let _ = std::fs::remove_dir_all(&dir);
            out
        }
        None => solve_enumerated(model, &EnumLimits { max_subproblems, ..EnumLimits::default() }),
    }
}

/// Scenarios from a scenario file, a directory holding `scenarios.csv`, or a
/// price history whose days become unit-weight scenarios.
pub fn load_price_sets(path: &Path) -> Result<Vec<PriceScenario>> {
    let file = if path.is_dir() { path.join("scenarios.csv") } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    if text.starts_with("id,weight") {
        return load_scenarios(&file);
    }
    let history = load_prices(&file, PriceFormat::Auto)?;
    Ok(history.days.into_iter().map(|d| PriceScenario { id: d.date.to_string(), prices: d.prices, weight: 1.0 }).collect())
}

/// One scenario by id, or the first when `id` is `None`.
pub fn pick_scenario(sets: &[PriceScenario], id: Option<&str>) -> Result<PriceScenario> {
    match id {
        Some(id) => sets.iter().find(|s| s.id == id).cloned().ok_or_else(|| Error::InvalidArgument(format!("no scenario {id:?}"))),
        None => sets.first().cloned().ok_or_else(|| Error::Validation("no scenarios".into())),
    }
}

/// `(id, prices)` pairs in file order.
pub fn scenario_pairs(sets: &[PriceScenario]) -> Vec<(String, Vec<f64>)> {
    sets.iter().map(|s| (s.id.clone(), s.prices.clone())).collect()
}

/// Dynamic-programming schedules used as unperturbed warm starts.
pub fn dp_baselines(plant: &Plant, sets: &[PriceScenario], grid: &DpGrid) -> Result<Vec<Trajectory>> {
    sets.iter()
        .map(|s| {
            let mut t = dp_schedule(plant, &s.prices, grid)?.best.trajectory;
            t.role = Role::WarmStart;
            Ok(t)
        })
        .collect()
}

/// Perturbed warm starts at every level; scenario `i` uses seed `seed + i` at each level.
pub fn eval_cases(plant: &Plant, sets: &[PriceScenario], baselines: &[Trajectory], levels: &[f64], seed: u64) -> Result<Vec<EvalCase>> {
    if sets.len() != baselines.len() {
        return Err(Error::InvalidArgument(format!("{} scenarios, {} baselines", sets.len(), baselines.len())));
    }
    let mut out = Vec::with_capacity(levels.len() * sets.len());
    for &level in levels {
        for (i, (s, b)) in sets.iter().zip(baselines).enumerate() {
            let warm = perturb_schedule(plant, b, level, seed.wrapping_add(i as u64))?;
            out.push(EvalCase { scenario: s.id.clone(), noise: level, prices: s.prices.clone(), warm });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        cfg.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }

    #[test]
    fn partial_and_invalid_configs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "[experiment]\nk = 5\n\n[train]\nepochs = 3\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!((cfg.experiment.k, cfg.train.epochs, cfg.experiment.variants), (5, 3, 8));
        std::fs::write(&p, "[experiment]\nnoise = \"loud\"\n").unwrap();
        assert!(RunConfig::load(&p).is_err());
        std::fs::write(&p, "[experiment]\nkk = 1\n").unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn price_sets_from_history_or_scenarios() {
        let dir = tempfile::tempdir().unwrap();
        let hist = crate::data::synthetic_prices(&SyntheticPrices { days: 3, ..Default::default() }, 1).unwrap();
        let p = dir.path().join("prices.csv");
        hist.save(&p).unwrap();
        let sets = load_price_sets(&p).unwrap();
        assert_eq!(sets.len(), 3);
        assert_eq!(sets[0].id, "2024-01-01");
        crate::data::save_scenarios(&dir.path().join("scenarios.csv"), &sets[1..]).unwrap();
        assert_eq!(load_price_sets(dir.path()).unwrap(), sets[1..].to_vec());
        assert_eq!(pick_scenario(&sets, Some("2024-01-02")).unwrap(), sets[1]);
        assert!(pick_scenario(&sets, Some("nope")).is_err());
    }
}
