//! Socket-boundary counters and the hybridized-model rates derived from them.
//!
//! A "packet" is one application frame (or one data-channel chunk) counted
//! where it crosses the socket. Stored units are bytes and milliseconds;
//! derived rates are bits/second and packets/second.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("no runs to average")]
    EmptyInput,
    #[error("capture {path}: {reason}")]
    Capture { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Live per-connection counters, shared between the handlers that touch a
/// session's sockets.
#[derive(Debug, Default)]
pub struct SessionCounters {
    packets_sent: AtomicU64,
    packets_received: AtomicU64,
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
}

impl SessionCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sent(&self, bytes: usize) {
        self.packets_sent.fetch_add(1, Ordering::Relaxed);
        self.bytes_sent.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn record_received(&self, bytes: usize) {
        self.packets_received.fetch_add(1, Ordering::Relaxed);
        self.bytes_received.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn packets_sent(&self) -> u64 {
        self.packets_sent.load(Ordering::Relaxed)
    }

    pub fn packets_received(&self) -> u64 {
        self.packets_received.load(Ordering::Relaxed)
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent.load(Ordering::Relaxed)
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self, start_mono_ms: f64, departure_mono_ms: f64) -> SessionMetrics {
        SessionMetrics {
            packets_sent: self.packets_sent(),
            packets_received: self.packets_received(),
            bytes_sent: self.bytes_sent(),
            bytes_received: self.bytes_received(),
            start_mono_ms,
            departure_mono_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub packets_sent: u64,
    pub packets_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub start_mono_ms: f64,
    pub departure_mono_ms: f64,
}

impl SessionMetrics {
    pub fn service_time_ms(&self) -> f64 {
        (self.departure_mono_ms - self.start_mono_ms).max(0.0)
    }
}

/// One line of a capture log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum CaptureRecord {
    Session(SessionRecord),
    Run(RunRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub nick: String,
    pub packets_sent: u64,
    pub packets_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub start_mono_ms: f64,
    pub departure_mono_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_epoch_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub departure_epoch_ms: Option<u64>,
    /// Median PING/PONG round trip, when probes were run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt_ms: Option<f64>,
}

impl SessionRecord {
    pub fn metrics(&self) -> SessionMetrics {
        SessionMetrics {
            packets_sent: self.packets_sent,
            packets_received: self.packets_received,
            bytes_sent: self.bytes_sent,
            bytes_received: self.bytes_received,
            start_mono_ms: self.start_mono_ms,
            departure_mono_ms: self.departure_mono_ms,
        }
    }
}

/// Run-wide record: the measurement window plus aggregate counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub server_start_mono_ms: f64,
    pub end_mono_ms: f64,
    #[serde(default)]
    pub clients: u64,
    #[serde(default)]
    pub packets_sent: u64,
    #[serde(default)]
    pub packets_received: u64,
    #[serde(default)]
    pub bytes_sent: u64,
    #[serde(default)]
    pub bytes_received: u64,
}

/// A parsed capture log.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub run: RunRecord,
    pub sessions: Vec<SessionRecord>,
}

impl Capture {
    /// Builds a capture, filling the run record's aggregate counters.
    pub fn new(mut run: RunRecord, sessions: Vec<SessionRecord>) -> Capture {
        run.clients = sessions.len() as u64;
        run.packets_sent = sessions.iter().map(|s| s.packets_sent).sum();
        run.packets_received = sessions.iter().map(|s| s.packets_received).sum();
        run.bytes_sent = sessions.iter().map(|s| s.bytes_sent).sum();
        run.bytes_received = sessions.iter().map(|s| s.bytes_received).sum();
        Capture { run, sessions }
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), TelemetryError> {
        let mut w = BufWriter::new(File::create(path)?);
        for s in &self.sessions {
            serde_json::to_writer(&mut w, &CaptureRecord::Session(s.clone()))
                .map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &CaptureRecord::Run(self.run.clone()))
            .map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Capture, TelemetryError> {
        let bad = |reason: String| TelemetryError::Capture {
            path: path.display().to_string(),
            reason,
        };
        let reader = BufReader::new(File::open(path).map_err(|e| bad(e.to_string()))?);
        let mut run = None;
        let mut sessions = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CaptureRecord = serde_json::from_str(&line)
                .map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
            match rec {
                CaptureRecord::Session(s) => sessions.push(s),
                CaptureRecord::Run(r) => {
                    if run.replace(r).is_some() {
                        return Err(bad("more than one run record".into()));
                    }
                }
            }
        }
        let run = run.ok_or_else(|| bad("missing run record".into()))?;
        Ok(Capture { run, sessions })
    }

    /// Receive-side totals and timing, the raw inputs of the rate formulas.
    pub fn totals(&self) -> RawCounters {
        RawCounters {
            label: self.run.label.clone(),
            clients: self.sessions.len() as u64,
            packets_sent: self.sessions.iter().map(|s| s.packets_sent).sum(),
            bytes_sent: self.sessions.iter().map(|s| s.bytes_sent).sum(),
            packets_received: self.sessions.iter().map(|s| s.packets_received).sum(),
            bytes_received: self.sessions.iter().map(|s| s.bytes_received).sum(),
            total_time_ms: self.run.end_mono_ms - self.run.server_start_mono_ms,
            service_time_ms: self.sessions.iter().map(|s| s.metrics().service_time_ms()).sum(),
            arrival_time_ms: self
                .sessions
                .iter()
                .map(|s| s.start_mono_ms - self.run.server_start_mono_ms)
                .sum(),
        }
    }
}

/// Raw counters of one run, the Table-2 style measurement factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCounters {
    pub label: String,
    pub clients: u64,
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub packets_received: u64,
    pub bytes_received: u64,
    /// Summed session start offsets from server start.
    pub arrival_time_ms: f64,
    pub service_time_ms: f64,
    pub total_time_ms: f64,
}

impl RawCounters {
    pub fn run_metrics(&self) -> Result<RunMetrics, TelemetryError> {
        RunMetrics::derive(
            &self.label,
            self.bytes_received,
            self.packets_received,
            self.total_time_ms,
            self.service_time_ms,
        )
    }
}

/// Derived rates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub opl_bytes: f64,
    pub packets: f64,
    pub total_time_ms: f64,
    pub service_time_ms: f64,
    pub lambda: f64,
    pub mu: f64,
    pub bs: f64,
    pub c: f64,
}

impl RunMetrics {
    pub fn derive(
        label: &str,
        opl_bytes: u64,
        packets: u64,
        total_time_ms: f64,
        service_time_ms: f64,
    ) -> Result<RunMetrics, TelemetryError> {
        let Rates { lambda, mu } = rates(packets, total_time_ms, service_time_ms)?;
        Ok(RunMetrics {
            label: label.to_string(),
            opl_bytes: opl_bytes as f64,
            packets: packets as f64,
            total_time_ms,
            service_time_ms,
            lambda,
            mu,
            bs: byte_size(opl_bytes, total_time_ms)?,
            c: capacity(opl_bytes, service_time_ms)?,
        })
    }

    /// The same run with every rate rounded to one decimal place.
    pub fn rounded(&self) -> RunMetrics {
        RunMetrics {
            lambda: round1(self.lambda),
            mu: round1(self.mu),
            bs: round1(self.bs),
            c: round1(self.c),
            ..self.clone()
        }
    }
}

/// Rounds half away from zero to one decimal, the way a spreadsheet
/// displays a one-decimal cell.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BioStats {
    /// Aggregate response BS / C.
    pub q: f64,
    pub idle: f64,
    /// Whether BS ≤ C held.
    pub constraint_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda: f64,
    pub mu: f64,
}

fn seconds(ms: f64) -> Result<f64, TelemetryError> {
    if ms > 0.0 && ms.is_finite() {
        Ok(ms / 1000.0)
    } else {
        Err(TelemetryError::ZeroDuration)
    }
}

/// Received bits per second over the whole run (BS).
pub fn byte_size(opl_bytes: u64, total_time_ms: f64) -> Result<f64, TelemetryError> {
    Ok(opl_bytes as f64 * 8.0 / seconds(total_time_ms)?)
}

/// Received bits per second over the summed service time (C).
pub fn capacity(opl_bytes: u64, service_time_ms: f64) -> Result<f64, TelemetryError> {
    Ok(opl_bytes as f64 * 8.0 / seconds(service_time_ms)?)
}

pub fn aggregate_response(bs: f64, c: f64) -> Result<BioStats, TelemetryError> {
    if c <= 0.0 || !c.is_finite() {
        return Err(TelemetryError::ZeroCapacity);
    }
    let q = bs / c;
    Ok(BioStats {
        q,
        idle: 1.0 - q,
        constraint_ok: bs <= c,
    })
}

/// Arrival rate over total time and service rate over summed service time.
pub fn rates(packets: u64, total_time_ms: f64, service_time_ms: f64) -> Result<Rates, TelemetryError> {
    let p = packets as f64;
    Ok(Rates {
        lambda: p / seconds(total_time_ms)?,
        mu: p / seconds(service_time_ms)?,
    })
}

/// Mean of the derived rates (and of the raw fields) across runs.
pub fn average_runs(runs: &[RunMetrics]) -> Result<RunMetrics, TelemetryError> {
    let n = runs.len() as f64;
    if runs.is_empty() {
        return Err(TelemetryError::EmptyInput);
    }
    let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    Ok(RunMetrics {
        label: if runs.len() == 1 {
            runs[0].label.clone()
        } else {
            "average".to_string()
        },
        opl_bytes: mean(|r| r.opl_bytes),
        packets: mean(|r| r.packets),
        total_time_ms: mean(|r| r.total_time_ms),
        service_time_ms: mean(|r| r.service_time_ms),
        lambda: mean(|r| r.lambda),
        mu: mean(|r| r.mu),
        bs: mean(|r| r.bs),
        c: mean(|r| r.c),
    })
}
