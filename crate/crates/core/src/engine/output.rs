use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{ArchiveEntry, RunLog};
use crate::dsl::{render_diff, serialize};
use crate::model::Chart;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t_seconds: f64,
    pub plausible_count: usize,
}

/// Cumulative plausible-patch counts on a regular time grid from 0 to the
/// budget (one row per second, at most 1000 intervals). The last row counts
/// every archived patch, including ones found while the final candidate
/// overran the budget.
pub fn summary_rows(log: &RunLog) -> Vec<SummaryRow> {
    let intervals = (log.budget.ceil() as usize).clamp(1, 1000);
    let step = log.budget / intervals as f64;
    (0..=intervals)
        .map(|i| {
            let t = if i == intervals { log.budget } else { i as f64 * step };
            let plausible_count = if i == intervals {
                log.plausible.len()
            } else {
                log.plausible.iter().filter(|e| e.found_at <= t).count()
            };
            SummaryRow { t_seconds: (t * 1e6).round() / 1e6, plausible_count }
        })
        .collect()
}

fn summary_csv(log: &RunLog) -> String {
    let mut out = String::from("t_seconds,plausible_count\n");
    for r in summary_rows(log) {
        let _ = writeln!(out, "{},{}", r.t_seconds, r.plausible_count);
    }
    out
}

/// Writes `run_log.json`, `summary.csv` and, for every plausible patch,
/// `patches/NNN.chart`, `NNN.patch.json` and `NNN.diff`.
pub fn write_run(dir: &Path, original: &Chart, plausible: &[ArchiveEntry], log: &RunLog) -> io::Result<()> {
    let patches = dir.join("patches");
    fs::create_dir_all(&patches)?;
    for (i, entry) in plausible.iter().enumerate() {
        let stem = format!("{:03}", i + 1);
        let chart = entry.chart().ok_or_else(|| io::Error::other("archive entry without chart"))?;
        fs::write(patches.join(format!("{stem}.chart")), serialize(chart))?;
        let json = serde_json::to_string_pretty(&entry.patch).map_err(io::Error::other)?;
        fs::write(patches.join(format!("{stem}.patch.json")), json + "\n")?;
        fs::write(patches.join(format!("{stem}.diff")), render_diff(original, chart))?;
    }
    fs::write(dir.join("run_log.json"), log.to_json() + "\n")?;
    fs::write(dir.join("summary.csv"), summary_csv(log))?;
    Ok(())
}
