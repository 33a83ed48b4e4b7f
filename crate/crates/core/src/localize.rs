//! Spectrum-based fault localization with the Tarantula formula, and
//! roulette-wheel selection over the resulting scores.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Chart, ComponentId, ComponentKind};
use crate::oracle::{TestKind, TestSuite};
use crate::sim::{simulate, CoverageTrace, SimError};

/// Weight added to every score in roulette selection.
pub const ROULETTE_FLOOR: f64 = 0.01;

#[derive(Debug, Error)]
pub enum LocalizeError {
    #[error("no failing test")]
    NoFailingTest,
    #[error("test `{test}` does not simulate: {error}")]
    Simulation { test: String, error: SimError },
}

/// `(ef/tf) / (ef/tf + ep/tp)`, with `ep/tp = 0` when `tp = 0` and a score
/// of 0 for components no test covers.
pub fn tarantula(ef: usize, tf: usize, ep: usize, tp: usize) -> f64 {
    let fail = if tf == 0 { 0.0 } else { ef as f64 / tf as f64 };
    let pass = if tp == 0 { 0.0 } else { ep as f64 / tp as f64 };
    if fail + pass == 0.0 {
        0.0
    } else {
        fail / (fail + pass)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMatrix {
    /// Components in declaration order.
    pub components: Vec<(ComponentId, ComponentKind)>,
    pub ef: Vec<usize>,
    pub ep: Vec<usize>,
    pub tf: usize,
    pub tp: usize,
}

impl CoverageMatrix {
    pub fn from_traces(chart: &Chart, runs: &[(TestKind, CoverageTrace)]) -> Self {
        let components = chart.components();
        let mut ef = vec![0; components.len()];
        let mut ep = vec![0; components.len()];
        let (mut tf, mut tp) = (0, 0);
        for (kind, cov) in runs {
            let counts = match kind {
                TestKind::Failing => {
                    tf += 1;
                    &mut ef
                }
                TestKind::Passing => {
                    tp += 1;
                    &mut ep
                }
            };
            for (i, (id, _)) in components.iter().enumerate() {
                if cov.covers(*id) {
                    counts[i] += 1;
                }
            }
        }
        CoverageMatrix { components, ef, ep, tf, tp }
    }

    pub fn rank(&self) -> Result<SuspiciousnessRanking, LocalizeError> {
        if self.tf == 0 {
            return Err(LocalizeError::NoFailingTest);
        }
        let entries = self
            .components
            .iter()
            .enumerate()
            .map(|(i, &(component, kind))| RankEntry {
                component,
                kind,
                ef: self.ef[i],
                ep: self.ep[i],
                score: tarantula(self.ef[i], self.tf, self.ep[i], self.tp),
            })
            .collect();
        Ok(SuspiciousnessRanking::new(entries))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub component: ComponentId,
    pub kind: ComponentKind,
    pub ef: usize,
    pub ep: usize,
    pub score: f64,
}

/// Scores per component, sorted by descending score with ties broken by
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspiciousnessRanking {
    entries: Vec<RankEntry>,
}

impl SuspiciousnessRanking {
    /// `entries` must be in declaration order.
    pub fn new(mut entries: Vec<RankEntry>) -> Self {
        // Stable sort keeps declaration order among ties.
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        SuspiciousnessRanking { entries }
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn score(&self, id: ComponentId) -> Option<f64> {
        self.entries.iter().find(|e| e.component == id).map(|e| e.score)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("ranking serializes")
    }
}

/// Simulates every test of `suite` on `chart` and ranks its components.
pub fn localize(chart: &Chart, suite: &TestSuite) -> Result<SuspiciousnessRanking, LocalizeError> {
    let runs = suite
        .tests()
        .map(|t| {
            simulate(chart, &t.stim)
                .map(|r| (t.kind, r.coverage))
                .map_err(|error| LocalizeError::Simulation { test: t.name.clone(), error })
        })
        .collect::<Result<Vec<_>, _>>()?;
    CoverageMatrix::from_traces(chart, &runs).rank()
}

/// Draws a component with probability proportional to `score + floor`.
pub fn roulette_select<R: Rng + ?Sized>(ranking: &SuspiciousnessRanking, rng: &mut R) -> ComponentId {
    roulette_select_among(ranking, |_| true, rng).expect("ranking is non-empty")
}

/// Like [`roulette_select`], restricted to components accepted by `keep`.
pub fn roulette_select_among<R: Rng + ?Sized>(
    ranking: &SuspiciousnessRanking,
    keep: impl Fn(ComponentId) -> bool,
    rng: &mut R,
) -> Option<ComponentId> {
    let pool: Vec<&RankEntry> = ranking.entries.iter().filter(|e| keep(e.component)).collect();
    match pool.len() {
        0 => None,
        1 => Some(pool[0].component),
        _ => {
            let dist = WeightedIndex::new(pool.iter().map(|e| e.score + ROULETTE_FLOOR)).ok()?;
            Some(pool[dist.sample(rng)].component)
        }
    }
}
