use std::time::Instant;

use serde::{Deserialize, Serialize};

/// How a run measures its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Deterministic: every executed test is charged by the cost model.
    Virtual,
    /// Elapsed real time.
    Wall,
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "virtual" => Ok(ClockMode::Virtual),
            "wall" => Ok(ClockMode::Wall),
            other => Err(format!("unknown clock `{other}` (expected virtual or wall)")),
        }
    }
}

/// Simulated cost of executing tests under the virtual clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Seconds charged per executed test (model load, setup).
    pub per_test: f64,
    /// Seconds charged per simulated step.
    pub per_step: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { per_test: 1e-3, per_step: 1e-5 }
    }
}

#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    cost: CostModel,
    start: Instant,
    charged: f64,
}

impl Clock {
    pub fn start(mode: ClockMode, cost: CostModel) -> Self {
        Clock { mode, cost, start: Instant::now(), charged: 0.0 }
    }

    pub fn charge(&mut self, tests: usize, steps: usize) {
        self.charged += tests as f64 * self.cost.per_test + steps as f64 * self.cost.per_step;
    }

    /// Seconds since the run started.
    pub fn now(&self) -> f64 {
        match self.mode {
            ClockMode::Virtual => self.charged,
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_only_moves_when_charged() {
        let mut c = Clock::start(ClockMode::Virtual, CostModel::default());
        assert_eq!(c.now(), 0.0);
        c.charge(2, 600);
        assert!((c.now() - 0.008).abs() < 1e-12);
    }
}
