//! Scripted workload driver.
//!
//! A [`ScenarioSpec`] expands into a seeded event schedule per client. Each
//! client runs on its own thread and connection; a turn gate hands the run
//! from one client to the next so that session windows do not overlap.
//! Messages and files are addressed to the sender's own nick, so every byte
//! crosses the server twice: once inbound and once relayed back.

use std::fmt;
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{self, ClientError, MessengerClient};
use crate::protocol::{Command, Frame, MAX_PAYLOAD};
use crate::telemetry::{Capture, RunRecord, SessionRecord, TelemetryError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("connect to {addr}: {source}")]
    ConnectError { addr: SocketAddr, source: ClientError },
    #[error("client {nick} failed at {event}: {source}")]
    ScenarioFailed {
        nick: String,
        event: String,
        source: ClientError,
    },
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("reading scenario file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ircd,
    Ftp,
    Mixed,
}

impl FromStr for Mode {
    type Err = LoadError;

    fn from_str(s: &str) -> Result<Self, LoadError> {
        match s.to_ascii_lowercase().as_str() {
            "ircd" => Ok(Mode::Ircd),
            "ftp" => Ok(Mode::Ftp),
            "mixed" => Ok(Mode::Mixed),
            _ => Err(LoadError::InvalidSpec(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ircd => "ircd",
            Mode::Ftp => "ftp",
            Mode::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub mode: Mode,
    pub clients: usize,
    pub messages_per_client: usize,
    pub message_size: usize,
    pub files_per_client: usize,
    pub file_size: usize,
    /// Base pause before each event; jitter is added on top.
    pub inter_event_gap_ms: f64,
    pub seed: u64,
    /// PING probes after login, used for round-trip estimates.
    pub rtt_probes: usize,
    pub chunk_size: usize,
    /// Run label written to the capture; defaults to the mode name.
    pub label: Option<String>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            mode: Mode::Ircd,
            clients: 2,
            messages_per_client: 10,
            message_size: 100,
            files_per_client: 0,
            file_size: 4096,
            inter_event_gap_ms: 2.0,
            seed: 0,
            rtt_probes: 0,
            chunk_size: 4096,
            label: None,
        }
    }
}

impl ScenarioSpec {
    pub fn ircd(clients: usize, messages: usize, seed: u64) -> Self {
        ScenarioSpec {
            clients,
            messages_per_client: messages,
            seed,
            ..Default::default()
        }
    }

    pub fn ftp(clients: usize, files: usize, file_size: usize, seed: u64) -> Self {
        ScenarioSpec {
            mode: Mode::Ftp,
            clients,
            messages_per_client: 0,
            files_per_client: files,
            file_size,
            seed,
            ..Default::default()
        }
    }

    pub fn mixed(clients: usize, messages: usize, files: usize, seed: u64) -> Self {
        ScenarioSpec {
            mode: Mode::Mixed,
            clients,
            messages_per_client: messages,
            files_per_client: files,
            seed,
            ..Default::default()
        }
    }

    /// Parses a `key = value` scenario file (TOML syntax).
    pub fn from_config_str(text: &str) -> Result<Self, LoadError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| LoadError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, LoadError> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.mode.to_string())
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        let bad = |m: String| Err(LoadError::InvalidSpec(m));
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        match self.mode {
            Mode::Ircd if self.files_per_client != 0 => return bad("ircd mode takes no files".into()),
            Mode::Ftp if self.messages_per_client != 0 => return bad("ftp mode takes no messages".into()),
            Mode::Mixed if self.messages_per_client == 0 || self.files_per_client == 0 => {
                return bad("mixed mode needs at least one message and one file".into())
            }
            _ => {}
        }
        if self.message_size > MAX_PAYLOAD {
            return bad(format!("message_size {} exceeds {MAX_PAYLOAD}", self.message_size));
        }
        if self.chunk_size == 0 || self.chunk_size > MAX_PAYLOAD {
            return bad(format!("chunk_size must be in 1..={MAX_PAYLOAD}"));
        }
        if !(self.inter_event_gap_ms >= 0.0) || !self.inter_event_gap_ms.is_finite() {
            return bad("inter_event_gap_ms must be a non-negative number".into());
        }
        if let Some(l) = &self.label {
            if l.is_empty() || l.contains([',', '\n', '\r', '"']) {
                return bad(format!("label {l:?} must be non-empty plain text"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Login,
    Ping { nonce: String },
    Message { size: usize, payload_seed: u64 },
    Transfer { filename: String, size: usize, payload_seed: u64 },
    Quit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub client: usize,
    pub nick: String,
    /// Pause before the event, in milliseconds.
    pub gap_ms: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl fmt::Display for ScheduledEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Login => write!(f, "login"),
            EventKind::Ping { nonce } => write!(f, "ping {nonce}"),
            EventKind::Message { size, .. } => write!(f, "message ({size} B)"),
            EventKind::Transfer { filename, size, .. } => write!(f, "transfer {filename} ({size} B)"),
            EventKind::Quit => write!(f, "quit"),
        }
    }
}

pub fn client_nick(i: usize) -> String {
    format!("client{}", i + 1)
}

/// Deterministic printable bytes for a message or file body.
pub fn payload(size: usize, seed: u64) -> Vec<u8> {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
    let mut rng = Pcg64::seed_from_u64(seed);
    (0..size)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

/// Expands a scenario into its ordered event list, client by client.
pub fn generate_schedule(spec: &ScenarioSpec) -> Result<Vec<ScheduledEvent>, LoadError> {
    spec.validate()?;
    let mut rng = Pcg64::seed_from_u64(spec.seed);
    let base = spec.inter_event_gap_ms;
    let jitter = if base > 0.0 {
        Some(Exp::new(1.0 / base).map_err(|e| LoadError::InvalidSpec(e.to_string()))?)
    } else {
        None
    };
    let mut out = Vec::new();
    for c in 0..spec.clients {
        let nick = client_nick(c);
        let mut work = Vec::new();
        for _ in 0..spec.messages_per_client {
            work.push(EventKind::Message {
                size: spec.message_size,
                payload_seed: rng.random(),
            });
        }
        for f in 0..spec.files_per_client {
            work.push(EventKind::Transfer {
                filename: format!("{nick}-file{}.bin", f + 1),
                size: spec.file_size,
                payload_seed: rng.random(),
            });
        }
        if spec.mode == Mode::Mixed {
            work.shuffle(&mut rng);
        }
        let probes = (0..spec.rtt_probes).map(|p| EventKind::Ping {
            nonce: format!("{nick}.{}", p + 1),
        });
        let kinds: Vec<EventKind> = std::iter::once(EventKind::Login)
            .chain(probes)
            .chain(work)
            .chain(std::iter::once(EventKind::Quit))
            .collect();
        for kind in kinds {
            let gap_ms = match (&kind, &jitter) {
                (EventKind::Login, _) | (_, None) => 0.0,
                (_, Some(d)) => base + d.sample(&mut rng),
            };
            out.push(ScheduledEvent {
                client: c,
                nick: nick.clone(),
                gap_ms,
                kind,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub capture: Capture,
    /// Payload bytes that reached recipients over the data channel.
    pub transferred_bytes: u64,
    pub messages_echoed: u64,
}

struct SessionResult {
    record: SessionRecord,
    transferred: u64,
    echoed: u64,
    server_start_mono_ms: Option<f64>,
}

/// Hands the run from client to client.
struct TurnGate {
    turn: Mutex<(usize, bool)>,
    cv: Condvar,
}

impl TurnGate {
    /// Blocks until it is `i`'s turn; false if an earlier client failed.
    fn wait(&self, i: usize) -> bool {
        let mut g = self.turn.lock().unwrap_or_else(|e| e.into_inner());
        while g.0 != i && !g.1 {
            g = self.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        !g.1
    }

    fn pass(&self, failed: bool) {
        let mut g = self.turn.lock().unwrap_or_else(|e| e.into_inner());
        g.0 += 1;
        g.1 |= failed;
        self.cv.notify_all();
    }
}

/// Runs the scenario against `server`, optionally writing the capture log.
pub fn run_scenario(spec: &ScenarioSpec, server: SocketAddr, out: Option<&Path>) -> Result<LoadOutcome, LoadError> {
    let schedule = generate_schedule(spec)?;
    let origin = Instant::now();
    let gate = Arc::new(TurnGate {
        turn: Mutex::new((0, false)),
        cv: Condvar::new(),
    });

    let mut handles = Vec::new();
    for c in 0..spec.clients {
        let events: Vec<ScheduledEvent> = schedule.iter().filter(|e| e.client == c).cloned().collect();
        let gate = Arc::clone(&gate);
        let chunk = spec.chunk_size;
        handles.push(thread::spawn(move || {
            if !gate.wait(c) {
                return None;
            }
            let r = run_client(&events, server, origin, chunk);
            gate.pass(r.is_err());
            Some(r)
        }));
    }

    let mut results = Vec::new();
    let mut first_err = None;
    for h in handles {
        match h.join().expect("client thread panicked") {
            Some(Ok(r)) => results.push(r),
            Some(Err(e)) if first_err.is_none() => first_err = Some(e),
            _ => {}
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let end_mono_ms = ms_since(origin);

    // Server start as seen from this process: the earliest estimate wins,
    // since every estimate is late by at most half a round trip.
    let server_start_mono_ms = results
        .iter()
        .filter_map(|r| r.server_start_mono_ms)
        .fold(f64::INFINITY, f64::min);
    let server_start_mono_ms = if server_start_mono_ms.is_finite() {
        server_start_mono_ms
    } else {
        0.0
    };
    let transferred_bytes = results.iter().map(|r| r.transferred).sum();
    let messages_echoed = results.iter().map(|r| r.echoed).sum();
    let capture = Capture::new(
        RunRecord {
            label: spec.label(),
            server_start_mono_ms,
            end_mono_ms,
            clients: 0,
            packets_sent: 0,
            packets_received: 0,
            bytes_sent: 0,
            bytes_received: 0,
        },
        results.into_iter().map(|r| r.record).collect(),
    );
    if let Some(path) = out {
        capture.write_jsonl(path)?;
    }
    Ok(LoadOutcome {
        capture,
        transferred_bytes,
        messages_echoed,
    })
}

fn ms_since(origin: Instant) -> f64 {
    origin.elapsed().as_secs_f64() * 1000.0
}

fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn run_client(
    events: &[ScheduledEvent],
    server: SocketAddr,
    origin: Instant,
    chunk_size: usize,
) -> Result<SessionResult, LoadError> {
    let nick = events.first().map(|e| e.nick.clone()).unwrap_or_default();
    let start_epoch_ms = epoch_ms();
    let start_mono_ms = ms_since(origin);
    let mut conn = MessengerClient::connect(server).map_err(|source| LoadError::ConnectError { addr: server, source })?;

    let mut server_start = None;
    let mut rtts = Vec::new();
    let (mut transferred, mut echoed) = (0u64, 0u64);
    let mut quit_at = None;

    let mut iter = events.iter();
    for ev in iter.by_ref() {
        if ev.gap_ms > 0.0 {
            thread::sleep(Duration::from_secs_f64(ev.gap_ms / 1000.0));
        }
        let fail = |source: ClientError| LoadError::ScenarioFailed {
            nick: nick.clone(),
            event: ev.to_string(),
            source,
        };
        match &ev.kind {
            EventKind::Login => {
                let sent = ms_since(origin);
                let uptime = conn.login(&nick).map_err(fail)?;
                let recv = ms_since(origin);
                server_start = Some((sent + recv) / 2.0 - uptime);
            }
            EventKind::Ping { nonce } => rtts.push(conn.ping(nonce).map_err(fail)?),
            EventKind::Message { size, payload_seed } => {
                let body = payload(*size, *payload_seed);
                conn.message(&nick, &body).map_err(fail)?;
                let (f, p) = conn.expect(Command::Msg).map_err(fail)?;
                if f.arg(0) != nick || p != body {
                    return Err(fail(ClientError::Unexpected(f.to_string())));
                }
                echoed += 1;
            }
            EventKind::Transfer {
                filename,
                size,
                payload_seed,
            } => {
                let data = payload(*size, *payload_seed);
                let got = self_transfer(&mut conn, &nick, filename, &data, chunk_size).map_err(fail)?;
                if got != data {
                    return Err(fail(ClientError::Unexpected(format!(
                        "transfer {filename} delivered {} of {} bytes",
                        got.len(),
                        data.len()
                    ))));
                }
                transferred += got.len() as u64;
            }
            EventKind::Quit => {
                quit_at = Some(ev);
                break;
            }
        }
    }

    let counters = match quit_at {
        Some(ev) => conn.quit().map_err(|source| LoadError::ScenarioFailed {
            nick: nick.clone(),
            event: ev.to_string(),
            source,
        })?,
        None => Arc::clone(conn.counters()),
    };
    let departure_mono_ms = ms_since(origin);
    let m = counters.snapshot(start_mono_ms, departure_mono_ms);
    Ok(SessionResult {
        record: SessionRecord {
            nick,
            packets_sent: m.packets_sent,
            packets_received: m.packets_received,
            bytes_sent: m.bytes_sent,
            bytes_received: m.bytes_received,
            start_mono_ms,
            departure_mono_ms,
            start_epoch_ms: Some(start_epoch_ms),
            departure_epoch_ms: Some(epoch_ms()),
            rtt_ms: median(&mut rtts),
        },
        transferred,
        echoed,
        server_start_mono_ms: server_start,
    })
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// Offers a file to oneself and plays both ends of the data channel.
///
/// The server answers a self-addressed offer with the recipient's
/// `FILE_OFFER` and `FILE_ACCEPT`, then the sender's `FILE_ACCEPT`, and
/// finally `OK <bytes>` once the terminator has been relayed.
pub fn self_transfer(
    conn: &mut MessengerClient,
    nick: &str,
    filename: &str,
    data: &[u8],
    chunk_size: usize,
) -> Result<Vec<u8>, ClientError> {
    let size = data.len().to_string();
    conn.send(&Frame::new(Command::FileOffer, [nick, filename, size.as_str()])?, b"")?;
    conn.expect(Command::FileOffer)?;
    conn.expect(Command::FileAccept)?;
    let (accept, _) = conn.expect(Command::FileAccept)?;
    let port: u16 = accept
        .arg(1)
        .parse()
        .map_err(|_| ClientError::Unexpected(accept.to_string()))?;
    let data_addr = SocketAddr::new(conn.server_addr().ip(), port);

    let counters = Arc::clone(conn.counters());
    let me = nick.to_string();
    let receiver = thread::spawn(move || client::receive_file(data_addr, &me, &counters));
    client::send_file(data_addr, nick, data, chunk_size, conn.counters())?;
    let received = receiver.join().expect("receiver thread panicked")?;
    let (ok, _) = conn.expect(Command::Ok)?;
    if ok.arg(0) != received.len().to_string() {
        return Err(ClientError::Unexpected(ok.to_string()));
    }
    Ok(received)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(schedule: &[ScheduledEvent], pred: impl Fn(&EventKind) -> bool) -> usize {
        schedule.iter().filter(|e| pred(&e.kind)).count()
    }

    #[test]
    fn same_seed_same_schedule() {
        let spec = ScenarioSpec::ircd(2, 1, 7);
        let a = serde_json::to_string(&generate_schedule(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_schedule(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = ScenarioSpec { seed: 8, ..spec };
        assert_ne!(a, serde_json::to_string(&generate_schedule(&other).unwrap()).unwrap());
    }

    #[test]
    fn zero_messages_is_logins_and_quits() {
        let s = generate_schedule(&ScenarioSpec::ircd(2, 0, 1)).unwrap();
        let kinds: Vec<_> = s.iter().map(|e| e.kind.clone()).collect();
        assert_eq!(kinds, vec![EventKind::Login, EventKind::Quit, EventKind::Login, EventKind::Quit]);
    }

    #[test]
    fn mixed_event_count() {
        let s = generate_schedule(&ScenarioSpec::mixed(2, 10, 2, 3)).unwrap();
        assert_eq!(s.len(), 2 * (1 + 10 + 2 + 1));
        assert_eq!(count(&s, |k| matches!(k, EventKind::Transfer { .. })), 4);
        assert_eq!(count(&s, |k| matches!(k, EventKind::Message { .. })), 20);
    }

    #[test]
    fn probes_follow_login() {
        let spec = ScenarioSpec {
            rtt_probes: 3,
            ..ScenarioSpec::ircd(1, 2, 0)
        };
        let s = generate_schedule(&spec).unwrap();
        assert!(matches!(s[0].kind, EventKind::Login));
        assert!(s[1..4].iter().all(|e| matches!(e.kind, EventKind::Ping { .. })));
        assert!(matches!(s.last().unwrap().kind, EventKind::Quit));
    }

    #[test]
    fn gaps_are_at_least_the_base() {
        let spec = ScenarioSpec {
            inter_event_gap_ms: 5.0,
            ..ScenarioSpec::ircd(1, 50, 9)
        };
        let s = generate_schedule(&spec).unwrap();
        assert_eq!(s[0].gap_ms, 0.0);
        assert!(s[1..].iter().all(|e| e.gap_ms >= 5.0));
        let zero = ScenarioSpec {
            inter_event_gap_ms: 0.0,
            ..spec
        };
        assert!(generate_schedule(&zero).unwrap().iter().all(|e| e.gap_ms == 0.0));
    }

    #[test]
    fn mode_invariants_are_enforced() {
        let bad = [
            ScenarioSpec { clients: 0, ..Default::default() },
            ScenarioSpec { files_per_client: 1, ..Default::default() },
            ScenarioSpec { mode: Mode::Ftp, messages_per_client: 1, ..Default::default() },
            ScenarioSpec::mixed(1, 0, 1, 0),
            ScenarioSpec::mixed(1, 1, 0, 0),
            ScenarioSpec { chunk_size: 0, ..Default::default() },
            ScenarioSpec { message_size: MAX_PAYLOAD + 1, ..Default::default() },
        ];
        for spec in bad {
            assert!(matches!(generate_schedule(&spec), Err(LoadError::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn config_file_parsing() {
        let spec = ScenarioSpec::from_config_str(
            "# nightly mixed run\nmode = \"mixed\"\nclients = 3\nmessages_per_client = 4\nfiles_per_client = 1\nfile_size = 1024\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(spec.mode, Mode::Mixed);
        assert_eq!((spec.clients, spec.files_per_client, spec.seed), (3, 1, 42));
        assert_eq!(spec.message_size, ScenarioSpec::default().message_size);
        assert!(ScenarioSpec::from_config_str("mode = \"ftp\"\nmessages_per_client = 3\n").is_err());
        assert!(ScenarioSpec::from_config_str("colour = 3\n").is_err());
    }

    #[test]
    fn payload_is_seeded() {
        assert_eq!(payload(64, 5), payload(64, 5));
        assert_ne!(payload(64, 5), payload(64, 6));
        assert!(payload(0, 1).is_empty());
    }
}
