//! Versioned schedule files with their profit decomposition.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::Mode;
use crate::sim::SimOutcome;

pub const SCHEDULE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub revenue: f64,
    pub operating_cost: f64,
    pub si_penalty: f64,
    pub vol_penalty: f64,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    pub schema: u32,
    pub method: String,
    pub scenario: String,
    /// Requested powers before simulation.
    pub scheduled_mw: Vec<f64>,
    pub p_mw: Vec<f64>,
    pub q_m3s: Vec<f64>,
    pub h_m: Vec<f64>,
    pub v_m3: Vec<f64>,
    pub mode: Vec<Mode>,
    pub profit: ProfitBreakdown,
}

impl ScheduleFile {
    /// Simulated trajectory and settlement of an evaluated schedule.
    pub fn from_outcome(method: &str, scenario: &str, o: &SimOutcome) -> Self {
        let t = &o.trajectory;
        ScheduleFile {
            schema: SCHEDULE_SCHEMA,
            method: method.to_string(),
            scenario: scenario.to_string(),
            scheduled_mw: o.scheduled.clone(),
            p_mw: t.power.clone(),
            q_m3s: t.flow.clone(),
            h_m: t.head.clone(),
            v_m3: t.volume.clone(),
            mode: t.mode.clone(),
            profit: ProfitBreakdown {
                revenue: o.revenue,
                operating_cost: o.operating_cost,
                si_penalty: o.si_penalty,
                vol_penalty: o.vol_penalty,
                profit: o.profit,
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: ScheduleFile = serde_json::from_str(&s)?;
        if f.schema != SCHEDULE_SCHEMA {
            return Err(Error::Validation(format!("schedule schema {} is not supported", f.schema)));
        }
        let n = f.p_mw.len();
        if [f.scheduled_mw.len(), f.q_m3s.len(), f.h_m.len(), f.v_m3.len(), f.mode.len()].iter().any(|&l| l != n) {
            return Err(Error::Validation("schedule columns differ in length".into()));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Plant;
    use crate::sim::evaluate_schedule;

    #[test]
    fn schedule_file_round_trips() {
        let plant = Plant::reference().unwrap();
        let mut sched = vec![0.0; 24];
        sched[3] = -8.0;
        sched[18] = 7.0;
        let o = evaluate_schedule(&sched, &[55.0; 24], &plant).unwrap();
        let f = ScheduleFile::from_outcome("dp", "2024-01-05", &o);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        f.save(&p).unwrap();
        let g = ScheduleFile::load(&p).unwrap();
        assert_eq!(g, f);
        assert_eq!(g.mode[3], Mode::Pump);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"schema\": 1"));
    }
}
