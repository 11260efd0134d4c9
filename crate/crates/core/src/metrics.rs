//! Per-iteration training logs, cross-seed aggregation and the CSV format
//! shared by every command.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// One row of `metrics.csv`. `mean_return` is NaN when no episode finished
/// inside the iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub episodes: usize,
    pub epsilon: f64,
    pub percent_of_expert: Option<f64>,
}

impl MetricRecord {
    /// Field-wise equality that treats NaN as equal to NaN and compares bits.
    pub fn bit_eq(&self, other: &MetricRecord) -> bool {
        self.iteration == other.iteration
            && self.env_steps == other.env_steps
            && self.mean_return.to_bits() == other.mean_return.to_bits()
            && self.episodes == other.episodes
            && self.epsilon.to_bits() == other.epsilon.to_bits()
            && self.percent_of_expert.map(f64::to_bits) == other.percent_of_expert.map(f64::to_bits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEvent {
    pub iteration: usize,
    pub label: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricLog {
    pub records: Vec<MetricRecord>,
    #[serde(default)]
    pub events: Vec<MetricEvent>,
}

impl MetricLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record; iterations must strictly increase.
    pub fn push(&mut self, record: MetricRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iteration <= last.iteration {
                return Err(LabError::invalid(format!(
                    "iteration {} does not follow {}",
                    record.iteration, last.iteration
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Inserts a record ahead of every existing one (used for the
    /// evaluation taken before any training).
    pub fn prepend(&mut self, record: MetricRecord) -> Result<()> {
        if let Some(first) = self.records.first() {
            if record.iteration >= first.iteration {
                return Err(LabError::invalid("prepended iteration must come first"));
            }
        }
        self.records.insert(0, record);
        Ok(())
    }

    pub fn annotate(&mut self, iteration: usize, label: impl Into<String>) {
        self.events.push(MetricEvent {
            iteration,
            label: label.into(),
        });
    }

    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_return).collect()
    }

    pub fn last_return(&self) -> Option<f64> {
        self.records.last().map(|r| r.mean_return)
    }

    /// Record-level bitwise equality.
    pub fn bit_eq(&self, other: &MetricLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.bit_eq(b))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record([
                "iteration",
                "env_steps",
                "mean_return",
                "episodes",
                "epsilon",
                "percent_of_expert",
            ])?;
        }
        w.flush().map_err(|e| LabError::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut log = MetricLog::new();
        for row in r.deserialize() {
            log.push(row?)?;
        }
        Ok(log)
    }

    /// Writes the log, creating missing parent directories.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Mean and population standard deviation across seeds per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub iterations: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub seeds: usize,
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Re-expresses the series as a single-seed log of its means.
    pub fn to_log(&self) -> MetricLog {
        MetricLog {
            records: self
                .iterations
                .iter()
                .zip(&self.mean)
                .map(|(&iteration, &mean_return)| MetricRecord {
                    iteration,
                    env_steps: 0,
                    mean_return,
                    episodes: 0,
                    epsilon: 0.0,
                    percent_of_expert: None,
                })
                .collect(),
            events: Vec::new(),
        }
    }
}

/// Which column of the log an aggregate is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    MeanReturn,
    PercentOfExpert,
}

fn value(record: &MetricRecord, column: Column) -> f64 {
    match column {
        Column::MeanReturn => record.mean_return,
        Column::PercentOfExpert => record.percent_of_expert.unwrap_or(f64::NAN),
    }
}

pub fn aggregate_runs(logs: &[MetricLog]) -> Result<AggregateSeries> {
    aggregate_column(logs, Column::MeanReturn)
}

/// Aggregates one column over the common iteration prefix of all logs.
/// Logs whose iteration grids disagree are truncated with a warning.
pub fn aggregate_column(logs: &[MetricLog], column: Column) -> Result<AggregateSeries> {
    let first = logs.first().ok_or_else(|| LabError::Empty("no logs to aggregate".into()))?;
    let mut common = 0;
    'outer: for (i, r) in first.records.iter().enumerate() {
        for log in &logs[1..] {
            match log.records.get(i) {
                Some(o) if o.iteration == r.iteration => {}
                _ => break 'outer,
            }
        }
        common = i + 1;
    }
    if logs.iter().any(|l| l.records.len() != common) {
        log::warn!("iteration grids differ across runs; truncating to {common} common iterations");
    }
    let mut series = AggregateSeries {
        iterations: Vec::with_capacity(common),
        mean: Vec::with_capacity(common),
        std: Vec::with_capacity(common),
        seeds: logs.len(),
    };
    for i in 0..common {
        let values: Vec<f64> = logs.iter().map(|l| value(&l.records[i], column)).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        series.iterations.push(first.records[i].iteration);
        series.mean.push(mean);
        series.std.push(var.sqrt());
    }
    Ok(series)
}

/// First-iteration return of a transfer run minus that of its baseline.
pub fn jumpstart(transfer: &MetricLog, baseline: &MetricLog) -> Result<f64> {
    let t = transfer.records.first().ok_or_else(|| LabError::Empty("transfer log".into()))?;
    let b = baseline.records.first().ok_or_else(|| LabError::Empty("baseline log".into()))?;
    Ok(t.mean_return - b.mean_return)
}
