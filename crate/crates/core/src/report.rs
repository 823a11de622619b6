//! Side-by-side comparison of the aggregate-response utilization and the
//! M/M/1 traffic intensity, from raw run counters to Markdown and CSV.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::queueing::{self, QueueError, QueueStats};
use crate::telemetry::{self, BioStats, Capture, RawCounters, RunMetrics, TelemetryError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    ParseError { path: PathBuf, source: TelemetryError },
    #[error("no runs to report")]
    EmptyInput,
    #[error("run {label}: {source}")]
    Telemetry { label: String, source: TelemetryError },
    #[error("run {label}: {source}")]
    UnstableQueue { label: String, source: QueueError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Full double precision throughout.
    #[default]
    Exact,
    /// Rates rounded to one decimal before and after averaging, the way
    /// the published tables were computed.
    TablePrecision,
}

impl FromStr for PrecisionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(PrecisionMode::Exact),
            "table" | "table_precision" | "table-precision" => Ok(PrecisionMode::TablePrecision),
            _ => Err(format!("unknown precision mode {s:?} (expected exact or table)")),
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecisionMode::Exact => "exact",
            PrecisionMode::TablePrecision => "table",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub bio_utilization: f64,
    pub bio_idle: f64,
    pub little_utilization: f64,
    pub little_idle: f64,
    pub util_diff_pct: f64,
    pub idle_diff_pct: f64,
    pub mode: PrecisionMode,
}

/// Relative difference in percent, taken over the larger magnitude.
pub fn diff_pct(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()) * 100.0
}

pub fn compare(bio: &BioStats, little: &QueueStats, mode: PrecisionMode) -> ComparisonReport {
    ComparisonReport {
        bio_utilization: bio.q,
        bio_idle: bio.idle,
        little_utilization: little.rho,
        little_idle: little.idle,
        util_diff_pct: diff_pct(bio.q, little.rho),
        idle_diff_pct: diff_pct(bio.idle, little.idle),
        mode,
    }
}

/// One run (or the average) carried through both models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    /// Rates as used by the models; rounded in table mode.
    pub metrics: RunMetrics,
    pub bio: BioStats,
    pub little: QueueStats,
    pub comparison: ComparisonReport,
}

fn model_row(metrics: RunMetrics, mode: PrecisionMode) -> Result<ModelRow, ReportError> {
    let bio = telemetry::aggregate_response(metrics.bs, metrics.c).map_err(|source| ReportError::Telemetry {
        label: metrics.label.clone(),
        source,
    })?;
    let little = queueing::mm1_stats(metrics.lambda, metrics.mu).map_err(|source| ReportError::UnstableQueue {
        label: metrics.label.clone(),
        source,
    })?;
    let comparison = compare(&bio, &little, mode);
    Ok(ModelRow {
        metrics,
        bio,
        little,
        comparison,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub mode: PrecisionMode,
    pub counters: Vec<RawCounters>,
    pub runs: Vec<ModelRow>,
    pub average: ModelRow,
}

impl PipelineReport {
    pub fn comparison(&self) -> &ComparisonReport {
        &self.average.comparison
    }
}

/// Raw counters → per-run rates → averaged rates → both models → comparison.
pub fn pipeline_from_counters(counters: &[RawCounters], mode: PrecisionMode) -> Result<PipelineReport, ReportError> {
    if counters.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut per_run = Vec::with_capacity(counters.len());
    for c in counters {
        let m = c.run_metrics().map_err(|source| ReportError::Telemetry {
            label: c.label.clone(),
            source,
        })?;
        per_run.push(match mode {
            PrecisionMode::Exact => m,
            PrecisionMode::TablePrecision => m.rounded(),
        });
    }
    let avg = telemetry::average_runs(&per_run).map_err(|source| ReportError::Telemetry {
        label: "average".into(),
        source,
    })?;
    let avg = match mode {
        PrecisionMode::Exact => avg,
        PrecisionMode::TablePrecision => avg.rounded(),
    };
    let runs = per_run
        .into_iter()
        .map(|m| model_row(m, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PipelineReport {
        mode,
        counters: counters.to_vec(),
        runs,
        average: model_row(avg, mode)?,
    })
}

pub fn read_captures<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<RawCounters>, ReportError> {
    if paths.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    paths
        .iter()
        .map(|p| {
            Capture::read_jsonl(p.as_ref())
                .map(|c| c.totals())
                .map_err(|source| ReportError::ParseError {
                    path: p.as_ref().to_path_buf(),
                    source,
                })
        })
        .collect()
}

pub fn full_pipeline<P: AsRef<Path>>(paths: &[P], mode: PrecisionMode) -> Result<PipelineReport, ReportError> {
    pipeline_from_counters(&read_captures(paths)?, mode)
}

impl PipelineReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Utilization comparison\n");
        let _ = writeln!(s, "Precision mode: `{}`\n", self.mode);

        let _ = writeln!(s, "## Runs\n");
        let _ = writeln!(
            s,
            "| Run | Clients | Packets received | Bytes received | Total time (ms) | Service time (ms) | λ (pkt/s) | μ (pkt/s) | BS (bit/s) | C (bit/s) | Q | ρ |"
        );
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|");
        for (c, r) in self.counters.iter().zip(&self.runs) {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.3} | {:.3} | {:.4} | {:.4} | {:.4} | {:.4} | {:.9} | {:.9} |",
                m.label,
                c.clients,
                c.packets_received,
                c.bytes_received,
                m.total_time_ms,
                m.service_time_ms,
                m.lambda,
                m.mu,
                m.bs,
                m.c,
                r.bio.q,
                r.little.rho
            );
        }

        let a = &self.average;
        let _ = writeln!(s, "\n## Averaged rates\n");
        let _ = writeln!(s, "| Quantity | Value |\n|---|---:|");
        for (name, v) in [
            ("Byte size BS (bit/s)", a.metrics.bs),
            ("Capacity C (bit/s)", a.metrics.c),
            ("Arrival rate λ (pkt/s)", a.metrics.lambda),
            ("Service rate μ (pkt/s)", a.metrics.mu),
        ] {
            let _ = writeln!(s, "| {name} | {v:.4} |");
        }

        let q = &a.little;
        let _ = writeln!(s, "\n## M/M/1 steady state\n");
        let _ = writeln!(s, "| Quantity | Value |\n|---|---:|");
        for (name, v) in [
            ("Utilization ρ", q.rho),
            ("L", q.l),
            ("Lq", q.lq),
            ("Ls", q.ls),
            ("W (s)", q.w),
            ("Wq (s)", q.wq),
            ("Ws (s)", q.ws),
            ("Idle", q.idle),
        ] {
            let _ = writeln!(s, "| {name} | {v:.9} |");
        }

        let c = &a.comparison;
        let _ = writeln!(s, "\n## Comparison\n");
        let _ = writeln!(s, "| Measure | Aggregate response | Little's law | Difference (%) |");
        let _ = writeln!(s, "|---|---:|---:|---:|");
        let _ = writeln!(
            s,
            "| Utilization | {:.9} | {:.9} | {:.9} |",
            c.bio_utilization, c.little_utilization, c.util_diff_pct
        );
        let _ = writeln!(
            s,
            "| Idle time | {:.9} | {:.9} | {:.9} |",
            c.bio_idle, c.little_idle, c.idle_diff_pct
        );
        if !a.bio.constraint_ok {
            let _ = writeln!(s, "\nWarning: BS > C, the aggregate response exceeds 1.");
        }
        s
    }

    /// One row per run plus the average, both models side by side.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "scope",
            "label",
            "lambda",
            "mu",
            "bs",
            "c",
            "bio_utilization",
            "bio_idle",
            "little_utilization",
            "little_idle",
            "util_diff_pct",
            "idle_diff_pct",
            "mode",
        ])?;
        let rows = self
            .runs
            .iter()
            .map(|r| ("run", r))
            .chain(std::iter::once(("average", &self.average)));
        for (scope, r) in rows {
            let c = &r.comparison;
            out.write_record([
                scope.to_string(),
                r.metrics.label.clone(),
                format!("{:.6}", r.metrics.lambda),
                format!("{:.6}", r.metrics.mu),
                format!("{:.6}", r.metrics.bs),
                format!("{:.6}", r.metrics.c),
                format!("{:.12}", c.bio_utilization),
                format!("{:.12}", c.bio_idle),
                format!("{:.12}", c.little_utilization),
                format!("{:.12}", c.little_idle),
                format!("{:.12}", c.util_diff_pct),
                format!("{:.12}", c.idle_diff_pct),
                self.mode.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Measurement factors as rows and runs as columns.
    pub fn write_measurement_csv<W: std::io::Write>(&self, w: W) -> Result<(), ReportError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["Measurement Factors".to_string()];
        header.extend(self.runs.iter().map(|r| r.metrics.label.clone()));
        out.write_record(&header)?;

        type Cell = fn(&RawCounters, &ModelRow) -> String;
        let factors: [(&str, Cell); 17] = [
            ("No. of Online Clients", |c, _| c.clients.to_string()),
            ("No. of Servers", |_, _| "1".into()),
            ("Packet Sent (Packet)", |c, _| c.packets_sent.to_string()),
            ("Packet Sent Length (Byte)", |c, _| c.bytes_sent.to_string()),
            ("Packet Received (Packet)", |c, _| c.packets_received.to_string()),
            ("Packet Receive Length (Byte)", |c, _| c.bytes_received.to_string()),
            ("Total Arrival Time (ms)", |c, _| format!("{:.3}", c.arrival_time_ms)),
            ("Total Service Time (ms)", |c, _| format!("{:.3}", c.service_time_ms)),
            ("Total Time (ms)", |c, _| format!("{:.3}", c.total_time_ms)),
            ("Arrival Rate (Packet/Second)", |_, r| format!("{:.4}", r.metrics.lambda)),
            ("Service Rate (Packet/Second)", |_, r| format!("{:.4}", r.metrics.mu)),
            ("Byte Size (Bit/Second)", |_, r| format!("{:.4}", r.metrics.bs)),
            ("Capacity (Bit/Second)", |_, r| format!("{:.4}", r.metrics.c)),
            ("Total Aggregate Response", |_, r| format!("{:.9}", r.bio.q)),
            ("Bio-Computing Expected Idle Time", |_, r| format!("{:.9}", r.bio.idle)),
            ("Traffic Intensity/Utilization", |_, r| format!("{:.9}", r.little.rho)),
            ("Little's Law Expected Idle Time", |_, r| format!("{:.9}", r.little.idle)),
        ];
        for (name, cell) in factors {
            let mut row = vec![name.to_string()];
            row.extend(self.counters.iter().zip(&self.runs).map(|(c, r)| cell(c, r)));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
