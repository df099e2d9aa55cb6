//! Resilience metrics over episode logs: load satisfaction, line
//! connectivity, operational cost, recovery duration and the per-episode
//! summary statistics.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scheduled demand is zero")]
    ZeroScheduledDemand,
    #[error("invalid recovery partition: {0}")]
    InvalidPartition(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Everything logged for one environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: usize,
    pub legal: bool,
    pub d_scheduled: Vec<f64>,
    pub d_actual: Vec<f64>,
    pub p_scheduled: Vec<f64>,
    pub p_actual: Vec<f64>,
    pub line_status: Vec<bool>,
    /// Electrical nodes `(substation, busbar)` of each island.
    pub islands: Vec<Vec<(usize, i8)>>,
    pub reward: f64,
}

impl StepRecord {
    pub fn n_islands(&self) -> usize {
        self.islands.len()
    }
}

/// Static context needed to interpret the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub horizon: usize,
    pub n_substations: usize,
    pub load_substation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn new(header: LogHeader) -> Self {
        EpisodeLog {
            header,
            records: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.header.horizon
    }

    pub fn steps_survived(&self) -> usize {
        self.records.len()
    }

    /// Line-delimited JSON: the header on the first line, then one record
    /// per step.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let path = path.as_ref();
        let err = |e: &dyn std::fmt::Display| MetricsError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(|e| err(&e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.header).map_err(|e| err(&e))?;
        w.write_all(b"\n").map_err(|e| err(&e))?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r).map_err(|e| err(&e))?;
            w.write_all(b"\n").map_err(|e| err(&e))?;
        }
        w.flush().map_err(|e| err(&e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<EpisodeLog, MetricsError> {
        let path = path.as_ref();
        let err = |e: &dyn std::fmt::Display| MetricsError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let file = std::fs::File::open(path).map_err(|e| err(&e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| err(&"empty log"))?
            .map_err(|e| err(&e))?;
        let header: LogHeader = serde_json::from_str(&first).map_err(|e| err(&e))?;
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(|e| err(&e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| err(&e))?);
        }
        Ok(EpisodeLog { header, records })
    }
}

/// Served over scheduled demand, in [0, 1].
pub fn load_satisfaction(record: &StepRecord) -> Result<f64, MetricsError> {
    let scheduled: f64 = record.d_scheduled.iter().sum();
    if !(scheduled > 0.0) {
        return Err(MetricsError::ZeroScheduledDemand);
    }
    let served: f64 = record.d_actual.iter().sum();
    Ok((served / scheduled).clamp(0.0, 1.0))
}

/// Fraction of connected lines; 1 for a grid without lines.
pub fn line_connectivity(record: &StepRecord) -> f64 {
    let n = record.line_status.len();
    if n == 0 {
        return 1.0;
    }
    record.line_status.iter().filter(|&&c| c).count() as f64 / n as f64
}

/// `c_re` times the total absolute deviation of generation from schedule.
pub fn operational_cost(record: &StepRecord, c_re: f64) -> f64 {
    c_re * record
        .p_scheduled
        .iter()
        .zip(&record.p_actual)
        .map(|(s, a)| (s - a).abs())
        .sum::<f64>()
}

/// A partition of the substations into recovery groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryPartition {
    pub groups: Vec<Vec<usize>>,
}

impl RecoveryPartition {
    /// One group per substation.
    pub fn per_substation(n_substations: usize) -> Self {
        RecoveryPartition {
            groups: (0..n_substations).map(|s| vec![s]).collect(),
        }
    }

    pub fn whole_grid(n_substations: usize) -> Self {
        RecoveryPartition {
            groups: vec![(0..n_substations).collect()],
        }
    }

    fn validate(&self, n_substations: usize) -> Result<(), MetricsError> {
        let mut seen = vec![false; n_substations];
        for g in &self.groups {
            for &s in g {
                if s >= n_substations {
                    return Err(MetricsError::InvalidPartition(format!(
                        "substation {s} out of range"
                    )));
                }
                if std::mem::replace(&mut seen[s], true) {
                    return Err(MetricsError::InvalidPartition(format!(
                        "substation {s} appears twice"
                    )));
                }
            }
        }
        if let Some(s) = seen.iter().position(|&x| !x) {
            return Err(MetricsError::InvalidPartition(format!(
                "substation {s} is not covered"
            )));
        }
        Ok(())
    }
}

fn fully_served(record: &StepRecord, loads: &[usize]) -> bool {
    loads.iter().all(|&j| {
        let (s, a) = (record.d_scheduled[j], record.d_actual[j]);
        (s - a).abs() <= 1e-9 * (1.0 + s.abs())
    })
}

/// Recovery time of one group: the first 1-based step from which every load
/// of the group stays fully served through the last logged step. `None`
/// when the group is not served at the end of the log.
fn recovery_time(log: &EpisodeLog, loads: &[usize]) -> Option<usize> {
    let mut tau = None;
    for (i, r) in log.records.iter().enumerate().rev() {
        if fully_served(r, loads) {
            tau = Some(i + 1);
        } else {
            break;
        }
    }
    if log.records.is_empty() {
        Some(1)
    } else {
        tau
    }
}

/// Sum over groups of the recovery time, each capped at the horizon.
pub fn recovery_duration(log: &EpisodeLog, partition: &RecoveryPartition) -> Result<f64, MetricsError> {
    partition.validate(log.header.n_substations)?;
    let h = log.horizon();
    let mut total = 0usize;
    for group in &partition.groups {
        let loads: Vec<usize> = log
            .header
            .load_substation
            .iter()
            .enumerate()
            .filter(|(_, s)| group.contains(s))
            .map(|(j, _)| j)
            .collect();
        let tau = recovery_time(log, &loads).unwrap_or(usize::MAX);
        total += tau.min(h);
    }
    Ok(total as f64)
}

/// Per-episode statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub steps_survived: f64,
    /// Mean operational cost per step.
    pub cost: f64,
    pub islands: f64,
    /// Mean of 1 - LS.
    pub unsupplied_load: f64,
    /// Mean count of open lines.
    pub broken_lines: f64,
    pub total_reward: f64,
}

impl SummaryRecord {
    pub const FIELDS: [&'static str; 6] = [
        "steps_survived",
        "cost",
        "islands",
        "unsupplied_load",
        "broken_lines",
        "total_reward",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.steps_survived,
            self.cost,
            self.islands,
            self.unsupplied_load,
            self.broken_lines,
            self.total_reward,
        ]
    }
}

pub fn episode_summary(log: &EpisodeLog, c_re: f64) -> SummaryRecord {
    let n = log.records.len();
    if n == 0 {
        return SummaryRecord {
            steps_survived: 0.0,
            cost: 0.0,
            islands: 0.0,
            unsupplied_load: 0.0,
            broken_lines: 0.0,
            total_reward: 0.0,
        };
    }
    let mut cost = 0.0;
    let mut islands = 0.0;
    let mut unsupplied = 0.0;
    let mut broken = 0.0;
    let mut reward = 0.0;
    for r in &log.records {
        cost += operational_cost(r, c_re);
        islands += r.n_islands() as f64;
        unsupplied += 1.0 - load_satisfaction(r).unwrap_or(1.0);
        broken += r.line_status.iter().filter(|&&c| !c).count() as f64;
        reward += r.reward;
    }
    let n_f = n as f64;
    SummaryRecord {
        steps_survived: n_f,
        cost: cost / n_f,
        islands: islands / n_f,
        unsupplied_load: unsupplied / n_f,
        broken_lines: broken / n_f,
        total_reward: reward,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricStats {
    pub fn from_values(values: &[f64]) -> MetricStats {
        if values.is_empty() {
            return MetricStats { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricStats {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Mean and standard deviation of every summary field across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub episodes: usize,
    pub steps_survived: MetricStats,
    pub cost: MetricStats,
    pub islands: MetricStats,
    pub unsupplied_load: MetricStats,
    pub broken_lines: MetricStats,
    pub total_reward: MetricStats,
}

impl AggregateSummary {
    pub fn from_summaries(summaries: &[SummaryRecord]) -> AggregateSummary {
        let col = |f: fn(&SummaryRecord) -> f64| {
            MetricStats::from_values(&summaries.iter().map(f).collect::<Vec<_>>())
        };
        AggregateSummary {
            episodes: summaries.len(),
            steps_survived: col(|s| s.steps_survived),
            cost: col(|s| s.cost),
            islands: col(|s| s.islands),
            unsupplied_load: col(|s| s.unsupplied_load),
            broken_lines: col(|s| s.broken_lines),
            total_reward: col(|s| s.total_reward),
        }
    }

    /// `(name, stats)` pairs in `SummaryRecord::FIELDS` order.
    pub fn rows(&self) -> [(&'static str, MetricStats); 6] {
        [
            ("steps_survived", self.steps_survived),
            ("cost", self.cost),
            ("islands", self.islands),
            ("unsupplied_load", self.unsupplied_load),
            ("broken_lines", self.broken_lines),
            ("total_reward", self.total_reward),
        ]
    }
}

/// Writes one row per episode.
pub fn write_summaries_csv(path: impl AsRef<Path>, summaries: &[SummaryRecord]) -> Result<(), MetricsError> {
    let path = path.as_ref();
    let err = |e: &dyn std::fmt::Display| MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
    let mut header = vec!["episode"];
    header.extend(SummaryRecord::FIELDS);
    w.write_record(&header).map_err(|e| err(&e))?;
    for (i, s) in summaries.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}
