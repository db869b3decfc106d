// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{BenchError, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean_ms: 0.0,
                median_ms: 0.0,
                p95_ms: 0.0,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        // nearest rank
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            median_ms: median,
            p95_ms: sorted[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub count: usize,
    pub repetitions: u32,
    pub interval_ms: u64,
    /// Above 1 the batch was issued concurrently and is not comparable
    /// with sequential runs.
    pub concurrency: usize,
    pub total_ms: f64,
    #[serde(flatten)]
    pub stats: Stats,
    pub samples_ms: Vec<f64>,
    /// Continuity stop reasons seen in full-cycle runs.
    #[serde(default)]
    pub stop_reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunResult>,
}

impl BenchReport {
    pub fn find(&self, mode: Mode, count: usize, repetitions: u32, interval_ms: u64) -> Option<&RunResult> {
        self.runs.iter().find(|r| {
            r.mode == mode && r.count == count && r.repetitions == repetitions && r.interval_ms == interval_ms
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(BenchError::InvalidSpec(format!("unknown report format `{s}`"))),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["mode", "count", "repetitions", "interval_ms", "concurrency", "statistic", "value"];

/// Writes `report`. CSV has one row per (run, statistic); JSON is the
/// report itself, raw samples included.
pub fn emit_report(report: &BenchReport, format: Format, out: impl Write) -> Result<(), BenchError> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(out, report)?;
            Ok(())
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for run in &report.runs {
                let mut stats = vec![
                    ("total_ms".to_owned(), run.total_ms),
                    ("mean_ms".to_owned(), run.stats.mean_ms),
                    ("median_ms".to_owned(), run.stats.median_ms),
                    ("p95_ms".to_owned(), run.stats.p95_ms),
                ];
                for (reason, n) in &run.stop_reasons {
                    stats.push((format!("stop_{reason}"), *n as f64));
                }
                for (name, value) in stats {
                    w.write_record([
                        run.mode.as_str().to_owned(),
                        run.count.to_string(),
                        run.repetitions.to_string(),
                        run.interval_ms.to_string(),
                        run.concurrency.to_string(),
                        name,
                        value.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        }
    }
}
