//! Partitioning around medoids over daily price vectors.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prices::{PriceHistory, HOURS};
use crate::error::{Error, Result};
use crate::plant::upc::csv_io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceScenario {
    pub id: String,
    pub prices: Vec<f64>,
    /// Number of days the scenario represents.
    pub weight: f64,
}

impl PriceScenario {
    pub fn validate(&self) -> Result<()> {
        if self.prices.len() != HOURS || self.prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("scenario {} needs {HOURS} finite prices", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub scenarios: Vec<PriceScenario>,
    /// Day index of each medoid, in scenario order.
    pub medoids: Vec<usize>,
    /// Scenario index of each day.
    pub assignment: Vec<usize>,
    /// Total distance after the build phase and after each accepted swap.
    pub cost_history: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn total_cost(d: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..d.len()).map(|i| medoids.iter().map(|&m| d[i][m]).fold(f64::INFINITY, f64::min)).sum()
}

/// Greedy build followed by best-improvement swaps to a local optimum.
/// The seed fixes the candidate order, which only matters for ties.
pub fn kmedoids(history: &PriceHistory, k: usize, seed: u64) -> Result<Clustering> {
    let n = history.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} days")));
    }
    let x: Vec<&[f64]> = history.days.iter().map(|d| d.prices.as_slice()).collect();
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(x[i], x[j])).collect()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    for _ in 0..k {
        let mut best = (f64::INFINITY, usize::MAX);
        for &c in order.iter().filter(|c| !medoids.contains(c)) {
            let cost: f64 = (0..n).map(|i| nearest[i].min(d[i][c])).sum();
            if cost < best.0 {
                best = (cost, c);
            }
        }
        medoids.push(best.1);
        for i in 0..n {
            nearest[i] = nearest[i].min(d[i][best.1]);
        }
    }
    let mut cost = total_cost(&d, &medoids);
    let mut history_cost = vec![cost];
    loop {
        let mut best = (cost, usize::MAX, usize::MAX);
        for slot in 0..k {
            for &c in order.iter().filter(|c| !medoids.contains(c)) {
                let mut trial = medoids.clone();
                trial[slot] = c;
                let t = total_cost(&d, &trial);
                if t < best.0 - 1e-12 * (1.0 + best.0.abs()) {
                    best = (t, slot, c);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        medoids[best.1] = best.2;
        cost = best.0;
        history_cost.push(cost);
    }
    medoids.sort_unstable();
    let assignment: Vec<usize> = (0..n)
        .map(|i| {
            let mut b = 0;
            for (s, &m) in medoids.iter().enumerate() {
                if d[i][m] < d[i][medoids[b]] {
                    b = s;
                }
            }
            b
        })
        .collect();
    let scenarios = medoids
        .iter()
        .enumerate()
        .map(|(s, &m)| PriceScenario {
            id: history.days[m].date.to_string(),
            prices: history.days[m].prices.clone(),
            weight: assignment.iter().filter(|&&a| a == s).count() as f64,
        })
        .collect();
    Ok(Clustering { scenarios, medoids, assignment, cost_history: history_cost })
}

impl Clustering {
    /// `dir/scenarios.csv` and `dir/assignment.csv` (`date,scenario`).
    pub fn save(&self, dir: &Path, history: &PriceHistory) -> Result<()> {
        if history.len() != self.assignment.len() {
            return Err(Error::InvalidArgument(format!("{} days, {} assignments", history.len(), self.assignment.len())));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_scenarios(&dir.join("scenarios.csv"), &self.scenarios)?;
        let path = dir.join("assignment.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, csv_io(e)))?;
        w.write_record(["date", "scenario"]).map_err(|e| Error::io(&path, csv_io(e)))?;
        for (d, &a) in history.days.iter().zip(&self.assignment) {
            w.write_record([d.date.to_string(), self.scenarios[a].id.clone()]).map_err(|e| Error::io(&path, csv_io(e)))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// `id,weight,h1..h24`.
pub fn save_scenarios(path: &Path, scenarios: &[PriceScenario]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    let mut header = vec!["id".to_string(), "weight".to_string()];
    header.extend((1..=HOURS).map(|h| format!("h{h}")));
    w.write_record(&header).map_err(|e| Error::io(path, csv_io(e)))?;
    for s in scenarios {
        let mut rec = vec![s.id.clone(), s.weight.to_string()];
        rec.extend(s.prices.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(|e| Error::io(path, csv_io(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_scenarios(path: &Path) -> Result<Vec<PriceScenario>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, csv_io(e)))?;
    let parse = |line: usize, msg: String| Error::Parse { path: path.display().to_string(), line, msg };
    let headers = r.headers().map_err(|e| Error::io(path, csv_io(e)))?.clone();
    if headers.len() != HOURS + 2 || &headers[0] != "id" || &headers[1] != "weight" {
        return Err(parse(1, "expected header id,weight,h1..h24".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse(line, e.to_string()))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| parse(line, format!("invalid number {s:?}")));
        let prices = (2..HOURS + 2).map(|j| num(&rec[j])).collect::<Result<Vec<_>>>()?;
        let s = PriceScenario { id: rec[0].to_string(), weight: num(&rec[1])?, prices };
        s.validate()?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{} holds no scenarios", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::prices::{synthetic_prices, DailyProfile, SyntheticPrices};
    use chrono::NaiveDate;

    fn constant_days(levels: &[f64]) -> PriceHistory {
        let d0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        PriceHistory::new(
            levels
                .iter()
                .enumerate()
                .map(|(i, &l)| DailyProfile { date: d0 + chrono::Duration::days(i as i64), prices: vec![l; HOURS] })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn saturated_k_makes_every_day_a_medoid() {
        let h = constant_days(&[1.0, 5.0, 2.0, 9.0]);
        let c = kmedoids(&h, 4, 0).unwrap();
        assert_eq!(c.medoids, vec![0, 1, 2, 3]);
        assert!(c.scenarios.iter().all(|s| s.weight == 1.0));
        assert_eq!(*c.cost_history.last().unwrap(), 0.0);
    }

    #[test]
    fn three_points_two_medoids() {
        // constant profiles 0, 0.1, 10: Euclidean distance over 24 hours scales by √24
        let h = constant_days(&[0.0, 0.1, 10.0]);
        for seed in 0..5 {
            let c = kmedoids(&h, 2, seed).unwrap();
            assert!(c.medoids.contains(&2));
            let cost = *c.cost_history.last().unwrap();
            assert!((cost - 0.1 * 24f64.sqrt()).abs() < 1e-12, "{cost}");
        }
    }

    #[test]
    fn swap_cost_never_increases_and_weights_sum_to_days() {
        let h = synthetic_prices(&SyntheticPrices { days: 60, ..Default::default() }, 4).unwrap();
        let c = kmedoids(&h, 7, 1).unwrap();
        assert!(c.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.scenarios.iter().map(|s| s.weight).sum::<f64>(), 60.0);
        assert_eq!(kmedoids(&h, 7, 1).unwrap(), c);
    }

    #[test]
    fn k_above_days_is_rejected() {
        assert!(kmedoids(&constant_days(&[1.0, 2.0]), 3, 0).is_err());
        assert!(kmedoids(&constant_days(&[1.0, 2.0]), 0, 0).is_err());
    }

    #[test]
    fn scenario_file_round_trips() {
        let h = synthetic_prices(&SyntheticPrices { days: 12, ..Default::default() }, 9).unwrap();
        let c = kmedoids(&h, 3, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        save_scenarios(&p, &c.scenarios).unwrap();
        assert_eq!(load_scenarios(&p).unwrap(), c.scenarios);
    }
}
