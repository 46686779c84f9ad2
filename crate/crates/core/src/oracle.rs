//! Exact desk-scale oracles: backward induction over a volume grid and brute-force enumeration.

use serde::{Deserialize, Serialize};

use crate::approx::linspace;
use crate::error::{Error, Result};
use crate::plant::{Mode, Plant, Role, Trajectory};
use crate::sim::{hour_cashflow, median, sim_step, terminal_penalty};

/// Hourly decision as a position along the envelope at the current head.
///
/// The fraction runs from the smallest to the largest power magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "level", rename_all = "lowercase")]
pub enum Action {
    Idle,
    Turbine(f64),
    Pump(f64),
}

impl Action {
    pub fn mode(&self) -> Mode {
        match self {
            Action::Idle => Mode::Idle,
            Action::Turbine(_) => Mode::Turbine,
            Action::Pump(_) => Mode::Pump,
        }
    }

    /// Requested power at head `h`.
    pub fn power(&self, plant: &Plant, h: f64) -> Result<f64> {
        match *self {
            Action::Idle => Ok(0.0),
            Action::Turbine(s) => {
                let (lo, hi) = plant.upc.envelope(Mode::Turbine, h)?;
                Ok(lo + s * (hi - lo))
            }
            Action::Pump(s) => {
                let (lo, hi) = plant.upc.envelope(Mode::Pump, h)?;
                Ok(hi + s * (lo - hi))
            }
        }
    }
}

/// Idle plus `levels` evenly spaced envelope positions per active mode.
pub fn action_levels(levels: usize) -> Result<Vec<Action>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("at least one power level per mode".into()));
    }
    let fr = if levels == 1 { vec![1.0] } else { linspace(0.0, 1.0, levels) };
    let mut a = vec![Action::Idle];
    a.extend(fr.iter().map(|&s| Action::Turbine(s)));
    a.extend(fr.iter().map(|&s| Action::Pump(s)));
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpGrid {
    /// Strictly increasing volume knots.
    pub volumes: Vec<f64>,
    pub actions: Vec<Action>,
    /// Forbid terminal volumes above target instead of pricing the excess.
    #[serde(default)]
    pub hard_target: bool,
}

impl DpGrid {
    pub fn new(plant: &Plant, mut volumes: Vec<f64>, actions: Vec<Action>) -> Result<Self> {
        let c = &plant.config;
        volumes.push(c.v_init);
        volumes.push(c.v_target);
        volumes.sort_by(f64::total_cmp);
        volumes.dedup();
        let (lo, hi) = plant.volume_bounds();
        if let Some(v) = volumes.iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::InvalidArgument(format!("volume knot {v} outside [{lo}, {hi}]")));
        }
        if actions.is_empty() {
            return Err(Error::InvalidArgument("empty action set".into()));
        }
        if let Some(a) = actions.iter().find(|a| matches!(a, Action::Turbine(s) | Action::Pump(s) if !(0.0..=1.0).contains(s))) {
            return Err(Error::InvalidArgument(format!("{a:?} lies outside the envelope")));
        }
        Ok(DpGrid { volumes, actions, hard_target: false })
    }

    /// `n_volumes` uniform knots over the admissible range and `levels` powers per mode.
    pub fn uniform(plant: &Plant, n_volumes: usize, levels: usize) -> Result<Self> {
        if n_volumes < 2 {
            return Err(Error::InvalidArgument("at least two volume knots".into()));
        }
        let (lo, hi) = plant.volume_bounds();
        DpGrid::new(plant, linspace(lo, hi, n_volumes), action_levels(levels)?)
    }

    /// Default resolution: 41 volume knots, 7 power levels per mode.
    pub fn default_for(plant: &Plant) -> Result<Self> {
        DpGrid::uniform(plant, 41, 7)
    }

    /// Every volume the actions can reach within `horizon` hours, so the
    /// backward induction never interpolates on reachable states.
    pub fn reachable(plant: &Plant, actions: Vec<Action>, horizon: usize) -> Result<Self> {
        let mut frontier = vec![plant.config.v_init];
        let mut all = frontier.clone();
        for _ in 0..horizon {
            let mut next = Vec::new();
            for &v in &frontier {
                let h = plant.head_at(v);
                for a in &actions {
                    next.push(sim_step(plant, v, h, a.power(plant, h)?)?.volume);
                }
            }
            next.sort_by(f64::total_cmp);
            next.dedup();
            all.extend_from_slice(&next);
            frontier = next;
        }
        DpGrid::new(plant, all, actions)
    }

    pub fn with_hard_target(mut self) -> Self {
        self.hard_target = true;
        self
    }

    /// Linear interpolation, flat outside the knots; an infinite neighbour wins.
    fn value_at(&self, values: &[f64], v: f64) -> f64 {
        let k = &self.volumes;
        match k.binary_search_by(|x| x.total_cmp(&v)) {
            Ok(i) => values[i],
            Err(0) => values[0],
            Err(i) if i == k.len() => values[k.len() - 1],
            Err(i) => {
                let (a, b) = (values[i - 1], values[i]);
                if !a.is_finite() || !b.is_finite() {
                    return a.min(b);
                }
                let s = (v - k[i - 1]) / (k[i] - k[i - 1]);
                a + s * (b - a)
            }
        }
    }
}

/// Schedule from an oracle with its exact path value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSchedule {
    pub actions: Vec<Action>,
    pub schedule: Vec<f64>,
    pub trajectory: Trajectory,
    /// Settled cash flows summed from the last hour back, less the terminal penalty.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpResult {
    pub best: OracleSchedule,
    /// Value function at the initial volume.
    pub table_value: f64,
}

fn check_prices(prices: &[f64]) -> Result<()> {
    if prices.is_empty() {
        return Err(Error::InvalidArgument("empty price vector".into()));
    }
    if let Some(t) = prices.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite price at hour {t}")));
    }
    Ok(())
}

/// Roll the chosen actions forward and settle them.
fn rollout(plant: &Plant, prices: &[f64], actions: &[Action], med: f64) -> Result<OracleSchedule> {
    let c = &plant.config;
    let n = actions.len();
    let mut traj = plant.idle_trajectory(n);
    traj.role = Role::Simulated;
    let mut schedule = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let (mut v, mut h) = (c.v_init, c.h_init);
    for (t, a) in actions.iter().enumerate() {
        let ph = a.power(plant, h)?;
        let s = sim_step(plant, v, h, ph)?;
        rewards.push(hour_cashflow(plant, prices[t], ph, s.power));
        schedule.push(ph);
        traj.power[t] = s.power;
        traj.flow[t] = s.flow;
        traj.head[t] = h;
        traj.volume[t] = s.volume;
        traj.mode[t] = s.mode;
        v = s.volume;
        h = s.head_next;
    }
    let value = rewards.iter().rev().fold(-terminal_penalty(plant, med, v, h), |acc, r| r + acc);
    Ok(OracleSchedule { actions: actions.to_vec(), schedule, trajectory: traj, value })
}

/// Backward induction over volume knots with linear value interpolation,
/// followed by a greedy forward pass on the true states.
pub fn dp_schedule(plant: &Plant, prices: &[f64], grid: &DpGrid) -> Result<DpResult> {
    check_prices(prices)?;
    if grid.volumes.is_empty() || grid.actions.is_empty() {
        return Err(Error::InvalidArgument("empty DP grid".into()));
    }
    let n = prices.len();
    let med = median(prices);
    let nk = grid.volumes.len();
    let heads: Vec<f64> = grid.volumes.iter().map(|&v| plant.head_at(v)).collect();
    let mut values = vec![vec![0.0; nk]; n + 1];
    for k in 0..nk {
        values[n][k] = if grid.hard_target && grid.volumes[k] > plant.config.v_target {
            f64::NEG_INFINITY
        } else {
            -terminal_penalty(plant, med, grid.volumes[k], heads[k])
        };
    }
    // transitions do not depend on the hour
    let mut moves = Vec::with_capacity(nk);
    for k in 0..nk {
        let (v, h) = (grid.volumes[k], heads[k]);
        let mut row = Vec::with_capacity(grid.actions.len());
        for a in &grid.actions {
            let ph = a.power(plant, h)?;
            let s = sim_step(plant, v, h, ph)?;
            row.push((ph, s.power, s.volume));
        }
        moves.push(row);
    }
    for t in (0..n).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        for k in 0..nk {
            let mut best = f64::NEG_INFINITY;
            for &(ph, p, v_new) in &moves[k] {
                let val = hour_cashflow(plant, prices[t], ph, p) + grid.value_at(next, v_new);
                if val > best {
                    best = val;
                }
            }
            head[t][k] = best;
        }
    }

    let c = &plant.config;
    let (mut v, mut h) = (c.v_init, c.h_init);
    let mut chosen = Vec::with_capacity(n);
    for t in 0..n {
        let mut best = (f64::NEG_INFINITY, 0usize, v, h);
        for (i, a) in grid.actions.iter().enumerate() {
            let ph = a.power(plant, h)?;
            let s = sim_step(plant, v, h, ph)?;
            let val = hour_cashflow(plant, prices[t], ph, s.power) + grid.value_at(&values[t + 1], s.volume);
            if val > best.0 {
                best = (val, i, s.volume, s.head_next);
            }
        }
        if !best.0.is_finite() {
            return Err(Error::Numerical(format!("no action at hour {t} reaches an admissible terminal volume")));
        }
        chosen.push(grid.actions[best.1]);
        (v, h) = (best.2, best.3);
    }
    let best = rollout(plant, prices, &chosen, med)?;
    Ok(DpResult { best, table_value: grid.value_at(&values[0], c.v_init) })
}

/// Largest horizon accepted by [`enumerate_exact`].
pub const MAX_ENUM_HORIZON: usize = 6;
/// Largest number of action sequences accepted by [`enumerate_exact`].
pub const MAX_ENUM_LEAVES: u64 = 1_000_000;

/// Best action sequence by exhaustive search; ties go to the lexicographically
/// smallest sequence of action indices.
pub fn enumerate_exact(plant: &Plant, prices: &[f64], actions: &[Action]) -> Result<OracleSchedule> {
    check_prices(prices)?;
    let n = prices.len();
    if actions.is_empty() {
        return Err(Error::InvalidArgument("empty action set".into()));
    }
    let leaves = (actions.len() as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if n > MAX_ENUM_HORIZON || leaves > MAX_ENUM_LEAVES {
        return Err(Error::InvalidArgument(format!(
            "{} actions over {n} hours exceed the search bound ({MAX_ENUM_HORIZON} hours, {MAX_ENUM_LEAVES} sequences)",
            actions.len()
        )));
    }
    let med = median(prices);
    let c = &plant.config;
    let mut search = Search {
        plant,
        prices,
        actions,
        med,
        rewards: vec![0.0; n],
        path: vec![0; n],
        best: None,
    };
    search.visit(0, c.v_init, c.h_init)?;
    let (_, idx) = search.best.ok_or_else(|| Error::Numerical("no sequence has a finite value".into()))?;
    let seq: Vec<Action> = idx.iter().map(|&i| actions[i]).collect();
    rollout(plant, prices, &seq, med)
}

struct Search<'a> {
    plant: &'a Plant,
    prices: &'a [f64],
    actions: &'a [Action],
    med: f64,
    rewards: Vec<f64>,
    path: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn visit(&mut self, t: usize, v: f64, h: f64) -> Result<()> {
        let n = self.prices.len();
        if t == n {
            let value =
                self.rewards.iter().rev().fold(-terminal_penalty(self.plant, self.med, v, h), |acc, r| r + acc);
            if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                self.best = Some((value, self.path.clone()));
            }
            return Ok(());
        }
        for i in 0..self.actions.len() {
            let ph = self.actions[i].power(self.plant, h)?;
            let s = sim_step(self.plant, v, h, ph)?;
            self.rewards[t] = hour_cashflow(self.plant, self.prices[t], ph, s.power);
            self.path[t] = i;
            self.visit(t + 1, s.volume, s.head_next)?;
        }
        Ok(())
    }
}
