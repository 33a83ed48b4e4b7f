use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{Type, Value};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

fn format_err(msg: impl Into<String>) -> TraceError {
    TraceError::Format(msg.into())
}

/// A uniformly sampled signal; sample `k` belongs to time `k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub name: String,
    pub dt: f64,
    pub values: Vec<Value>,
}

impl SignalTrace {
    /// Zero-order hold: the latest sample at or before `time`, clamped to the
    /// last one.
    pub fn sample_at(&self, time: f64) -> Value {
        let k = ((time / self.dt) + 1e-9).floor().max(0.0) as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    /// Simulation step.
    pub dt: f64,
    pub duration: f64,
    pub inputs: Vec<SignalTrace>,
}

impl StimulusSet {
    /// Number of steps after `t = 0`.
    pub fn steps(&self) -> Result<usize, TraceError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(format_err(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(format_err(format!("duration must be non-negative, got {}", self.duration)));
        }
        let n = (self.duration / self.dt).round();
        if (n * self.dt - self.duration).abs() > 1e-6 * self.dt.max(self.duration) {
            return Err(format_err(format!("duration {} is not a multiple of dt {}", self.duration, self.dt)));
        }
        if let Some(t) = self.inputs.iter().find(|t| t.values.is_empty() || !(t.dt > 0.0)) {
            return Err(format_err(format!("input `{}` has no samples or a bad dt", t.name)));
        }
        Ok(n as usize)
    }
}

/// Raw contents of a `time,<name>...` CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub cells: Vec<Vec<String>>,
}

impl CsvTable {
    /// Sample spacing, or `None` with fewer than two rows. Non-uniform spacing
    /// is an error.
    pub fn dt(&self) -> Result<Option<f64>, TraceError> {
        if self.times.len() < 2 {
            return Ok(None);
        }
        let dt = self.times[1] - self.times[0];
        if !(dt > 0.0) {
            return Err(format_err("time column must be increasing"));
        }
        for (k, t) in self.times.iter().enumerate() {
            let expected = self.times[0] + k as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(format_err(format!("non-uniform sampling at row {}", k + 1)));
            }
        }
        Ok(Some(dt))
    }

    /// Converts the columns to typed traces. `type_of` resolves each column
    /// name; unknown names are an error.
    pub fn to_traces(
        &self,
        default_dt: f64,
        type_of: impl Fn(&str) -> Option<Type>,
    ) -> Result<Vec<SignalTrace>, TraceError> {
        if self.times.first().is_some_and(|t| t.abs() > 1e-9) {
            return Err(format_err("time column must start at 0"));
        }
        let dt = self.dt()?.unwrap_or(default_dt);
        self.names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let ty = type_of(name).ok_or_else(|| format_err(format!("unknown signal `{name}`")))?;
                let values = self
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(r, row)| {
                        parse_cell(&row[c], ty)
                            .ok_or_else(|| format_err(format!("row {}: bad {} value `{}` for `{name}`", r + 1, ty.keyword(), row[c])))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(SignalTrace { name: name.clone(), dt, values })
            })
            .collect()
    }
}

fn parse_cell(cell: &str, ty: Type) -> Option<Value> {
    let cell = cell.trim();
    match ty {
        Type::Bool => match cell {
            "1" | "true" => Some(Value::Bool(true)),
            "0" | "false" => Some(Value::Bool(false)),
            _ => None,
        },
        Type::Int => cell.parse().ok().map(Value::Int),
        Type::Real => cell.parse::<f64>().ok().filter(|r| r.is_finite()).map(Value::Real),
    }
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable, TraceError> {
    let file = std::fs::File::open(path)
        .map_err(|e| TraceError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_csv_from(file)
}

pub fn read_csv_from(reader: impl Read) -> Result<CsvTable, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("time") {
        return Err(format_err("first column must be `time`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let t: f64 = record[0].parse().map_err(|_| format_err(format!("row {}: bad time `{}`", r + 1, &record[0])))?;
        times.push(t);
        cells.push(record.iter().skip(1).map(str::to_string).collect());
    }
    if times.is_empty() {
        return Err(format_err("no samples"));
    }
    Ok(CsvTable { names, times, cells })
}

fn format_value(v: Value) -> String {
    match v {
        Value::Bool(b) => u8::from(b).to_string(),
        Value::Int(i) => i.to_string(),
        Value::Real(r) => r.to_string(),
    }
}

/// Writes traces of equal length and step as `time,<name>...`.
pub fn write_csv(out: impl Write, traces: &[SignalTrace]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(traces.iter().map(|t| t.name.clone()));
    w.write_record(&header)?;
    let len = traces.first().map_or(0, |t| t.values.len());
    if traces.iter().any(|t| t.values.len() != len) {
        return Err(format_err("traces differ in length"));
    }
    for k in 0..len {
        // Round away float noise such as 0.30000000000000004.
        let t = (traces[0].time(k) * 1e9).round() / 1e9;
        let mut row = vec![t.to_string()];
        row.extend(traces.iter().map(|tr| format_value(tr.values[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
