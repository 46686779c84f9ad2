//! Scenario-level comparison of scheduling methods and report files.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Checkpoint, WeightBounds};
use crate::oracle::{dp_schedule, DpGrid};
use crate::plant::upc::csv_io;
use crate::plant::Trajectory;
use crate::qp::{PenaltyWeights, RefineConfig};
use crate::sim::{evaluate_schedule, SimOutcome};
use crate::train::Pipeline;

#[derive(Debug, Clone)]
pub enum Method {
    /// Simulate the warm start as given.
    Raw,
    /// Refinement with constant weights at the geometric midpoint of the bounds.
    NoNn(WeightBounds),
    /// Learned weights, a single linearize-and-solve pass.
    NoRec(Checkpoint),
    /// Learned weights with the configured number of passes.
    Dfl(Checkpoint),
    /// Backward induction on the prices; ignores the warm start.
    Dp(DpGrid),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::NoNn(_) => "no_nn",
            Method::NoRec(_) => "no_rec",
            Method::Dfl(_) => "dfl",
            Method::Dp(_) => "dp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub scenario: String,
    pub noise: f64,
    pub prices: Vec<f64>,
    pub warm: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub method: String,
    pub scenario: String,
    pub noise: f64,
    pub profit: f64,
    pub revenue: f64,
    pub operating_cost: f64,
    pub si_penalty: f64,
    pub vol_penalty: f64,
    pub seconds: f64,
    /// A refinement pass was infeasible and an earlier iterate was kept.
    pub fell_back: bool,
}

impl CaseResult {
    fn new(method: &str, case: &EvalCase, o: &SimOutcome, seconds: f64, fell_back: bool) -> Self {
        CaseResult {
            method: method.into(),
            scenario: case.scenario.clone(),
            noise: case.noise,
            profit: o.profit,
            revenue: o.revenue,
            operating_cost: o.operating_cost,
            si_penalty: o.si_penalty,
            vol_penalty: o.vol_penalty,
            seconds,
            fell_back,
        }
    }
}

/// Requested schedule a method produces for one case.
pub fn method_schedule(p: &Pipeline, method: &Method, case: &EvalCase) -> Result<(Vec<f64>, bool)> {
    let refine = |w: &PenaltyWeights, cfg: RefineConfig| -> Result<(Vec<f64>, bool)> {
        let q = Pipeline { refine: cfg, ..*p };
        let (r, _) = q.refine_with(&case.prices, &case.warm, w)?;
        Ok((r.trajectory.power, r.fell_back))
    };
    match method {
        Method::Raw => Ok((case.warm.power.clone(), false)),
        Method::NoNn(b) => refine(&PenaltyWeights::uniform(case.prices.len(), b.midpoint()), p.refine),
        Method::NoRec(ck) => refine(&ck.predict(&case.prices, &case.warm)?, RefineConfig { iterations: 1, ..p.refine }),
        Method::Dfl(ck) => refine(&ck.predict(&case.prices, &case.warm)?, p.refine),
        Method::Dp(grid) => Ok((dp_schedule(p.plant, &case.prices, grid)?.best.schedule, false)),
    }
}

pub fn evaluate(p: &Pipeline, method: &Method, cases: &[EvalCase]) -> Result<Vec<CaseResult>> {
    if cases.is_empty() {
        return Err(Error::InvalidArgument("no scenarios to evaluate".into()));
    }
    cases
        .iter()
        .map(|case| {
            let start = Instant::now();
            let (sched, fell_back) = method_schedule(p, method, case)?;
            let o = evaluate_schedule(&sched, &case.prices, p.plant)?;
            Ok(CaseResult::new(method.name(), case, &o, start.elapsed().as_secs_f64(), fell_back))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub profit_mean: f64,
    /// Sample standard deviation; zero for a single case.
    pub profit_std: f64,
    /// Mean wall time per case.
    pub time_s: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn summarize(results: &[CaseResult]) -> Result<MethodSummary> {
    let first = results.first().ok_or_else(|| Error::InvalidArgument("no results to summarize".into()))?;
    let profits: Vec<f64> = results.iter().map(|r| r.profit).collect();
    let (profit_mean, profit_std) = mean_std(&profits);
    let time_s = results.iter().map(|r| r.seconds).sum::<f64>() / results.len() as f64;
    Ok(MethodSummary { method: first.method.clone(), profit_mean, profit_std, time_s })
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, csv_io(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `method,profit_mean,profit_std,time_s`.
pub fn write_method_report(path: &Path, rows: &[MethodSummary]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub method: String,
    pub noise: f64,
    pub profit_mean: f64,
    pub profit_std: f64,
}

/// Profit against warm-start noise level per method.
pub fn noise_curve(results: &[CaseResult]) -> Vec<NoiseRow> {
    let mut keys: Vec<(String, f64)> = results.iter().map(|r| (r.method.clone(), r.noise)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(m, n)| {
            let p: Vec<f64> = results.iter().filter(|r| r.method == m && r.noise == n).map(|r| r.profit).collect();
            let (profit_mean, profit_std) = mean_std(&p);
            NoiseRow { method: m, noise: n, profit_mean, profit_std }
        })
        .collect()
}

/// `method,noise,profit_mean,profit_std`.
pub fn write_noise_curve(path: &Path, results: &[CaseResult]) -> Result<()> {
    write_rows(path, &noise_curve(results))
}

/// Per-case profit decomposition.
pub fn write_case_results(path: &Path, results: &[CaseResult]) -> Result<()> {
    write_rows(path, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{fit_global, GlobalSampling};
    use crate::plant::Plant;

    fn case(plant: &Plant) -> EvalCase {
        let mut warm = plant.idle_trajectory(24);
        let prices: Vec<f64> = (0..24).map(|t| 50.0 + t as f64).collect();
        let sim = evaluate_schedule(
            &(0..24).map(|t| if t < 4 { -7.0 } else if t > 19 { 6.0 } else { 0.0 }).collect::<Vec<_>>(),
            &prices,
            plant,
        )
        .unwrap();
        warm.power = sim.trajectory.power.clone();
        warm.flow = sim.trajectory.flow.clone();
        warm.head = sim.trajectory.head.clone();
        warm.volume = sim.trajectory.volume.clone();
        warm.mode = sim.trajectory.mode.clone();
        EvalCase { scenario: "a".into(), noise: 0.3, prices, warm }
    }

    #[test]
    fn raw_equals_direct_simulation() {
        let plant = Plant::reference().unwrap();
        let global = fit_global(&plant, GlobalSampling::default()).unwrap();
        let p = Pipeline { plant: &plant, global: &global, refine: RefineConfig::default() };
        let c = case(&plant);
        let r = evaluate(&p, &Method::Raw, std::slice::from_ref(&c)).unwrap();
        assert_eq!(r[0].profit, evaluate_schedule(&c.warm.power, &c.prices, &plant).unwrap().profit);
        let nn = evaluate(&p, &Method::NoNn(WeightBounds::default()), std::slice::from_ref(&c)).unwrap();
        assert!(nn[0].profit.is_finite());
        assert!(evaluate(&p, &Method::Raw, &[]).is_err());
    }

    #[test]
    fn summaries_and_curves() {
        let mk = |m: &str, noise: f64, profit: f64| CaseResult {
            method: m.into(),
            scenario: "s".into(),
            noise,
            profit,
            revenue: 0.0,
            operating_cost: 0.0,
            si_penalty: 0.0,
            vol_penalty: 0.0,
            seconds: 1.0,
            fell_back: false,
        };
        let rs = vec![mk("dfl", 0.1, 10.0), mk("dfl", 0.1, 14.0), mk("dfl", 0.8, 6.0)];
        let s = summarize(&rs).unwrap();
        assert_eq!(s.profit_mean, 10.0);
        assert_eq!(s.profit_std, 4.0);
        let c = noise_curve(&rs);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].profit_mean, 12.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_method_report(&p, &[s]).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("method,profit_mean,profit_std,time_s\n"));
    }
}
