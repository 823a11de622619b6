//! Multi-client relay server.
//!
//! Every connection gets its own thread. Clients log in with a unique nick,
//! exchange `MSG` frames through the server, and move files over a data
//! channel the server opens per transfer. All traffic is counted at the
//! socket boundary and notable events go to a JSON Lines log.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, LineWriter, Read, Write};
use std::net::{IpAddr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::DataRole;
use crate::protocol::{self, Command, Frame, FrameDecoder};
use crate::telemetry::{SessionCounters, SessionMetrics};

/// How long a transfer waits for both data connections.
const DATA_ACCEPT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("bind {addr}: {source}")]
    BindError { addr: SocketAddr, source: io::Error },
    #[error("event log {path}: {source}")]
    LogIoError { path: PathBuf, source: io::Error },
    #[error("bad data port range {0:?}")]
    BadPortRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPorts {
    /// Let the OS pick a free port per transfer.
    Ephemeral,
    Range(u16, u16),
}

impl FromStr for DataPorts {
    type Err = ServerError;

    fn from_str(s: &str) -> Result<Self, ServerError> {
        if s == "0" || s.eq_ignore_ascii_case("ephemeral") {
            return Ok(DataPorts::Ephemeral);
        }
        let bad = || ServerError::BadPortRange(s.to_string());
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let (a, b): (u16, u16) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a == 0 || a > b {
            return Err(bad());
        }
        Ok(DataPorts::Range(a, b))
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub control_addr: SocketAddr,
    pub data_ports: DataPorts,
    pub log_path: Option<PathBuf>,
}

impl ServerConfig {
    /// Loopback server on an OS-assigned port with no event log.
    pub fn local() -> Self {
        ServerConfig {
            control_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            data_ports: DataPorts::Ephemeral,
            log_path: None,
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub ts_epoch_ms: u64,
    pub ts_mono_ms: f64,
    pub kind: String,
    pub nick: Option<String>,
    pub peer: Option<String>,
    pub bytes: Option<u64>,
    pub detail: Option<String>,
}

fn epoch_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSession {
    pub nick: String,
    pub connect_mono_ms: f64,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepartedSession {
    pub nick: String,
    pub connect_mono_ms: f64,
    pub departure_mono_ms: f64,
    pub connect_epoch_ms: u64,
    pub departure_epoch_ms: u64,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferOutcome {
    Completed,
    Aborted,
    SizeMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub id: u64,
    pub sender: String,
    pub recipient: String,
    pub filename: String,
    pub port: u16,
    pub offered: u64,
    /// Payload bytes read from the sender.
    pub received_from_sender: u64,
    /// Payload bytes written to the recipient.
    pub sent_to_recipient: u64,
    pub outcome: TransferOutcome,
}

#[derive(Debug, Clone)]
pub struct ServerSnapshot {
    pub uptime_ms: f64,
    pub live: Vec<LiveSession>,
    pub departed: Vec<DepartedSession>,
    pub logins: u64,
    pub departures: u64,
    pub transfers: Vec<TransferRecord>,
}

/// Write half of a connection, shared by every thread that sends to it.
struct Conn {
    stream: Mutex<TcpStream>,
    counters: Arc<SessionCounters>,
}

impl Conn {
    fn send(&self, frame: &Frame, payload: &[u8]) -> io::Result<()> {
        let bytes = protocol::encode_frame(frame, payload)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        lock(&self.stream).write_all(&bytes)?;
        self.counters.record_sent(bytes.len());
        Ok(())
    }
}

struct Session {
    conn: Arc<Conn>,
    connect_mono_ms: f64,
    connect_epoch_ms: u64,
}

#[derive(Default)]
struct Registry {
    live: HashMap<String, Session>,
    departed: Vec<DepartedSession>,
    logins: u64,
    departures: u64,
}

struct EventLog {
    out: Option<Mutex<LineWriter<File>>>,
}

impl EventLog {
    fn append(&self, event: &Event) {
        if let Some(out) = &self.out {
            let mut line = serde_json::to_string(event).expect("event serializes");
            line.push('\n');
            let _ = lock(out).write_all(line.as_bytes());
        }
    }
}

/// Shared state behind a running server.
pub struct ServerState {
    start: Instant,
    start_epoch_ms: u64,
    ip: IpAddr,
    data_ports: DataPorts,
    registry: Mutex<Registry>,
    log: EventLog,
    ports_in_use: Mutex<HashSet<u16>>,
    transfers: Mutex<Vec<TransferRecord>>,
    next_transfer: AtomicU64,
    shutting_down: AtomicBool,
    open_streams: Mutex<Vec<TcpStream>>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl ServerState {
    pub fn mono_ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1000.0
    }

    pub fn start_epoch_ms(&self) -> u64 {
        self.start_epoch_ms
    }

    fn event(&self, kind: &str, nick: Option<&str>, peer: Option<&str>, bytes: Option<u64>, detail: Option<String>) {
        self.log.append(&Event {
            ts_epoch_ms: epoch_ms(),
            ts_mono_ms: self.mono_ms(),
            kind: kind.to_string(),
            nick: nick.map(str::to_string),
            peer: peer.map(str::to_string),
            bytes,
            detail,
        });
    }

    fn lookup(&self, nick: &str) -> Option<Arc<Conn>> {
        lock(&self.registry).live.get(nick).map(|s| Arc::clone(&s.conn))
    }

    /// Registers `nick` for `conn`. Fails when the nick is already live.
    fn login(&self, nick: &str, conn: &Arc<Conn>) -> bool {
        let mut reg = lock(&self.registry);
        if reg.live.contains_key(nick) {
            return false;
        }
        reg.live.insert(
            nick.to_string(),
            Session {
                conn: Arc::clone(conn),
                connect_mono_ms: self.mono_ms(),
                connect_epoch_ms: epoch_ms(),
            },
        );
        reg.logins += 1;
        true
    }

    fn depart(&self, nick: &str, reason: &str) {
        let mut reg = lock(&self.registry);
        let Some(s) = reg.live.remove(nick) else {
            return;
        };
        let departure_mono_ms = self.mono_ms();
        let metrics = s.conn.counters.snapshot(s.connect_mono_ms, departure_mono_ms);
        let bytes = metrics.bytes_received;
        reg.departed.push(DepartedSession {
            nick: nick.to_string(),
            connect_mono_ms: s.connect_mono_ms,
            departure_mono_ms,
            connect_epoch_ms: s.connect_epoch_ms,
            departure_epoch_ms: epoch_ms(),
            metrics,
        });
        reg.departures += 1;
        drop(reg);
        self.event("logout", Some(nick), None, Some(bytes), Some(reason.to_string()));
    }

    pub fn snapshot(&self) -> ServerSnapshot {
        let reg = lock(&self.registry);
        let now = self.mono_ms();
        let mut live: Vec<LiveSession> = reg
            .live
            .iter()
            .map(|(nick, s)| LiveSession {
                nick: nick.clone(),
                connect_mono_ms: s.connect_mono_ms,
                metrics: s.conn.counters.snapshot(s.connect_mono_ms, now),
            })
            .collect();
        live.sort_by(|a, b| a.nick.cmp(&b.nick));
        ServerSnapshot {
            uptime_ms: now,
            live,
            departed: reg.departed.clone(),
            logins: reg.logins,
            departures: reg.departures,
            transfers: lock(&self.transfers).clone(),
        }
    }

    fn track(&self, stream: &TcpStream) {
        if let Ok(s) = stream.try_clone() {
            lock(&self.open_streams).push(s);
        }
    }

    fn spawn(self: &Arc<Self>, f: impl FnOnce(Arc<ServerState>) + Send + 'static) {
        let state = Arc::clone(self);
        let handle = thread::spawn(move || f(state));
        let mut threads = lock(&self.threads);
        threads.retain(|h| !h.is_finished());
        threads.push(handle);
    }
}

/// Handle to a running server. Dropping it shuts the server down.
pub struct ServerHandle {
    state: Arc<ServerState>,
    addr: SocketAddr,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<ServerState> {
        &self.state
    }

    pub fn snapshot(&self) -> ServerSnapshot {
        self.state.snapshot()
    }

    /// Stops accepting, closes every connection and waits for handlers.
    pub fn shutdown(&mut self) {
        if self.state.shutting_down.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for s in lock(&self.state.open_streams).drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        loop {
            let batch: Vec<_> = lock(&self.state.threads).drain(..).collect();
            if batch.is_empty() {
                break;
            }
            for h in batch {
                let _ = h.join();
            }
        }
        self.state.event("server_stop", None, None, None, None);
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn start_server(config: &ServerConfig) -> Result<ServerHandle, ServerError> {
    let log = match &config.log_path {
        None => EventLog { out: None },
        Some(path) => {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| ServerError::LogIoError {
                    path: path.clone(),
                    source,
                })?;
            EventLog {
                out: Some(Mutex::new(LineWriter::new(file))),
            }
        }
    };
    let listener = TcpListener::bind(config.control_addr).map_err(|source| ServerError::BindError {
        addr: config.control_addr,
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServerError::BindError {
        addr: config.control_addr,
        source,
    })?;
    let state = Arc::new(ServerState {
        start: Instant::now(),
        start_epoch_ms: epoch_ms(),
        ip: addr.ip(),
        data_ports: config.data_ports,
        registry: Mutex::new(Registry::default()),
        log,
        ports_in_use: Mutex::new(HashSet::new()),
        transfers: Mutex::new(Vec::new()),
        next_transfer: AtomicU64::new(1),
        shutting_down: AtomicBool::new(false),
        open_streams: Mutex::new(Vec::new()),
        threads: Mutex::new(Vec::new()),
    });
    state.event("server_start", None, None, None, Some(addr.to_string()));

    let acceptor = {
        let state = Arc::clone(&state);
        thread::spawn(move || {
            for stream in listener.incoming() {
                if state.shutting_down.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                state.track(&stream);
                state.spawn(move |st| handle_connection(st, stream));
            }
        })
    };
    Ok(ServerHandle {
        state,
        addr,
        acceptor: Some(acceptor),
    })
}

fn handle_connection(state: Arc<ServerState>, mut stream: TcpStream) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let Ok(writer) = stream.try_clone() else { return };
    let conn = Arc::new(Conn {
        stream: Mutex::new(writer),
        counters: Arc::new(SessionCounters::new()),
    });
    let mut decoder = FrameDecoder::new();
    let mut nick: Option<String> = None;
    let mut buf = [0u8; 16384];
    let mut reason = "disconnect";

    'conn: loop {
        loop {
            match decoder.next_frame() {
                Ok(None) => break,
                Ok(Some((frame, payload, size))) => {
                    conn.counters.record_received(size);
                    match dispatch(&state, &conn, &mut nick, frame, payload) {
                        Ok(Flow::Continue) => {}
                        Ok(Flow::Close) => {
                            reason = "quit";
                            break 'conn;
                        }
                        Err(_) => break 'conn,
                    }
                }
                Err(e) => {
                    state.event("malformed", nick.as_deref(), Some(&peer), None, Some(e.to_string()));
                    let _ = conn.send(&Frame::err("MALFORMED"), b"");
                    reason = "malformed";
                    break 'conn;
                }
            }
        }
        match stream.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => decoder.push(&buf[..n]),
        }
    }

    if let Some(n) = &nick {
        state.depart(n, reason);
    }
    let _ = stream.shutdown(Shutdown::Both);
}

enum Flow {
    Continue,
    Close,
}

fn dispatch(
    state: &Arc<ServerState>,
    conn: &Arc<Conn>,
    nick: &mut Option<String>,
    frame: Frame,
    payload: Vec<u8>,
) -> io::Result<Flow> {
    match (frame.command, nick.as_deref()) {
        (Command::Ping, _) => conn.send(&Frame::new(Command::Pong, [frame.arg(0)]).expect("valid"), b"")?,
        (Command::Quit, me) => {
            let me = me.map(str::to_string);
            conn.send(&Frame::ok(), b"")?;
            if let Some(me) = me {
                state.depart(&me, "quit");
                *nick = None;
            }
            return Ok(Flow::Close);
        }
        (Command::Pong | Command::Ok, _) => {}
        (Command::Login, None) => {
            let wanted = frame.arg(0);
            if state.login(wanted, conn) {
                *nick = Some(wanted.to_string());
                state.event("login", Some(wanted), None, None, None);
                // Fixed width keeps byte counts independent of when a client arrives.
                conn.send(&Frame::ok_with(format!("{:016.3}", state.mono_ms())).expect("valid"), b"")?;
            } else {
                state.event("login_rejected", Some(wanted), None, None, Some("NICK_TAKEN".into()));
                conn.send(&Frame::err("NICK_TAKEN"), b"")?;
            }
        }
        (Command::Login, Some(_)) => conn.send(&Frame::err("ALREADY_LOGGED_IN"), b"")?,
        (_, None) => conn.send(&Frame::err("NOT_LOGGED_IN"), b"")?,
        (Command::Msg, Some(me)) => route_message(state, conn, me, frame.arg(0), &payload)?,
        (Command::Invite, Some(me)) => {
            let to = frame.arg(0);
            match state.lookup(to) {
                Some(target) => {
                    state.event("invite", Some(me), Some(to), None, None);
                    let _ = target.send(&Frame::new(Command::Invite, [me]).expect("valid"), b"");
                    conn.send(&Frame::ok(), b"")?;
                }
                None => conn.send(&Frame::err("NO_SUCH_USER"), b"")?,
            }
        }
        (Command::List, Some(_)) => {
            let mut nicks: Vec<String> = lock(&state.registry).live.keys().cloned().collect();
            nicks.sort();
            conn.send(&Frame::ok_with(nicks.join(",")).expect("valid"), b"")?;
        }
        (Command::FileOffer, Some(me)) => {
            let me = me.to_string();
            broker_file_transfer(state, conn, &me, &frame)?;
        }
        (Command::FileAccept | Command::Err, Some(_)) => conn.send(&Frame::err("UNEXPECTED"), b"")?,
    }
    Ok(Flow::Continue)
}

/// Relays `payload` to `to` as `MSG <from> <len>`.
fn route_message(state: &ServerState, conn: &Conn, from: &str, to: &str, payload: &[u8]) -> io::Result<()> {
    let Some(target) = state.lookup(to) else {
        state.event("msg_dropped", Some(from), Some(to), Some(payload.len() as u64), Some("NO_SUCH_USER".into()));
        return conn.send(&Frame::err("NO_SUCH_USER"), b"");
    };
    let relayed = Frame::msg(from, payload.len()).expect("nick is a valid token");
    match target.send(&relayed, payload) {
        Ok(()) => state.event("msg", Some(from), Some(to), Some(payload.len() as u64), None),
        Err(e) => state.event("msg_dropped", Some(from), Some(to), Some(payload.len() as u64), Some(e.to_string())),
    }
    Ok(())
}

fn bind_data_port(state: &ServerState) -> Option<(TcpListener, u16)> {
    match state.data_ports {
        DataPorts::Ephemeral => {
            let l = TcpListener::bind((state.ip, 0)).ok()?;
            let port = l.local_addr().ok()?.port();
            lock(&state.ports_in_use).insert(port);
            Some((l, port))
        }
        DataPorts::Range(lo, hi) => {
            let mut in_use = lock(&state.ports_in_use);
            for port in lo..=hi {
                if in_use.contains(&port) {
                    continue;
                }
                if let Ok(l) = TcpListener::bind((state.ip, port)) {
                    in_use.insert(port);
                    return Some((l, port));
                }
            }
            None
        }
    }
}

/// Handles `FILE_OFFER <recipient> <filename> <size>` from `sender`.
///
/// The recipient is shown the offer, both parties get `FILE_ACCEPT <peer>
/// <port>`, and a transfer thread relays chunks from the sender's data
/// connection to the recipient's until the zero-length terminator.
fn broker_file_transfer(state: &Arc<ServerState>, conn: &Arc<Conn>, sender: &str, offer: &Frame) -> io::Result<()> {
    let (recipient, filename) = (offer.arg(0).to_string(), offer.arg(1).to_string());
    let Ok(size) = offer.arg(2).parse::<u64>() else {
        return conn.send(&Frame::err("BAD_SIZE"), b"");
    };
    let Some(target) = state.lookup(&recipient) else {
        state.event("transfer_rejected", Some(sender), Some(&recipient), Some(size), Some("NO_SUCH_USER".into()));
        return conn.send(&Frame::err("NO_SUCH_USER"), b"");
    };
    let Some((listener, port)) = bind_data_port(state) else {
        return conn.send(&Frame::err("NO_DATA_PORT"), b"");
    };
    let id = state.next_transfer.fetch_add(1, Ordering::Relaxed);
    state.event(
        "file_offer",
        Some(sender),
        Some(&recipient),
        Some(size),
        Some(format!("id={id} file={filename} port={port}")),
    );

    let port_s = port.to_string();
    let notify = target
        .send(&Frame::new(Command::FileOffer, [sender, &filename, offer.arg(2)]).expect("valid"), b"")
        .and_then(|_| target.send(&Frame::new(Command::FileAccept, [sender, &port_s]).expect("valid"), b""));
    if notify.is_err() {
        lock(&state.ports_in_use).remove(&port);
        return conn.send(&Frame::err("NO_SUCH_USER"), b"");
    }
    conn.send(&Frame::new(Command::FileAccept, [recipient.as_str(), &port_s]).expect("valid"), b"")?;

    let job = Transfer {
        id,
        sender: sender.to_string(),
        recipient,
        filename,
        port,
        offered: size,
        sender_conn: Arc::clone(conn),
        recipient_conn: target,
    };
    state.spawn(move |st| {
        let record = job.run(&st, listener);
        lock(&st.ports_in_use).remove(&record.port);
        lock(&st.transfers).push(record);
    });
    Ok(())
}

struct Transfer {
    id: u64,
    sender: String,
    recipient: String,
    filename: String,
    port: u16,
    offered: u64,
    sender_conn: Arc<Conn>,
    recipient_conn: Arc<Conn>,
}

impl Transfer {
    fn run(self, state: &ServerState, listener: TcpListener) -> TransferRecord {
        let mut record = TransferRecord {
            id: self.id,
            sender: self.sender.clone(),
            recipient: self.recipient.clone(),
            filename: self.filename.clone(),
            port: self.port,
            offered: self.offered,
            received_from_sender: 0,
            sent_to_recipient: 0,
            outcome: TransferOutcome::Aborted,
        };
        match self.accept_pair(state, &listener) {
            Some((src, dst)) => self.relay(src, dst, &mut record),
            None => record.outcome = TransferOutcome::Aborted,
        }
        drop(listener);

        let bytes = Some(record.received_from_sender);
        let detail = Some(format!(
            "id={} offered={} relayed={}",
            record.id, record.offered, record.sent_to_recipient
        ));
        match record.outcome {
            TransferOutcome::Completed => {
                state.event("transfer_complete", Some(&self.sender), Some(&self.recipient), bytes, detail);
                let ok = Frame::ok_with(record.sent_to_recipient.to_string()).expect("valid");
                let _ = self.sender_conn.send(&ok, b"");
            }
            TransferOutcome::Aborted | TransferOutcome::SizeMismatch => {
                let code = if record.outcome == TransferOutcome::Aborted {
                    "TRANSFER_ABORTED"
                } else {
                    "SIZE_MISMATCH"
                };
                state.event("transfer_aborted", Some(&self.sender), Some(&self.recipient), bytes, detail);
                let _ = self.sender_conn.send(&Frame::err(code), b"");
                if !Arc::ptr_eq(&self.sender_conn, &self.recipient_conn) {
                    let _ = self.recipient_conn.send(&Frame::err(code), b"");
                }
            }
        }
        record
    }

    /// Waits for the sender's and the recipient's data connections.
    fn accept_pair(&self, state: &ServerState, listener: &TcpListener) -> Option<(TcpStream, TcpStream)> {
        listener.set_nonblocking(true).ok()?;
        let deadline = Instant::now() + DATA_ACCEPT_TIMEOUT;
        let (mut src, mut dst) = (None, None);
        while src.is_none() || dst.is_none() {
            if Instant::now() > deadline || state.shutting_down.load(Ordering::SeqCst) {
                return None;
            }
            let mut s = match listener.accept() {
                Ok((s, _)) => s,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(1));
                    continue;
                }
                Err(_) => return None,
            };
            let _ = s.set_nonblocking(false);
            let _ = s.set_nodelay(true);
            let _ = s.set_read_timeout(Some(DATA_ACCEPT_TIMEOUT));
            let hello = match protocol::read_chunk(&mut s) {
                Ok(Some(h)) => h,
                _ => continue,
            };
            let _ = s.set_read_timeout(None);
            match DataRole::parse_hello(&hello) {
                Some((DataRole::Send, n)) if n == self.sender && src.is_none() => {
                    self.sender_conn.counters.record_received(4 + hello.len());
                    state.track(&s);
                    src = Some(s);
                }
                Some((DataRole::Recv, n)) if n == self.recipient && dst.is_none() => {
                    self.recipient_conn.counters.record_received(4 + hello.len());
                    state.track(&s);
                    dst = Some(s);
                }
                _ => {}
            }
        }
        Some((src?, dst?))
    }

    fn relay(&self, mut src: TcpStream, mut dst: TcpStream, record: &mut TransferRecord) {
        loop {
            let chunk = match protocol::read_chunk(&mut src) {
                Ok(Some(c)) => c,
                Ok(None) | Err(_) => {
                    record.outcome = TransferOutcome::Aborted;
                    break;
                }
            };
            self.sender_conn.counters.record_received(4 + chunk.len());
            record.received_from_sender += chunk.len() as u64;
            let done = chunk.is_empty();
            if done && record.received_from_sender != self.offered {
                record.outcome = TransferOutcome::SizeMismatch;
                break;
            }
            match protocol::write_chunk(&mut dst, &chunk) {
                Ok(n) => {
                    self.recipient_conn.counters.record_sent(n);
                    record.sent_to_recipient += chunk.len() as u64;
                }
                Err(_) => {
                    record.outcome = TransferOutcome::Aborted;
                    break;
                }
            }
            if done {
                record.outcome = TransferOutcome::Completed;
                break;
            }
        }
        let _ = dst.flush();
        let _ = dst.shutdown(Shutdown::Both);
        let _ = src.shutdown(Shutdown::Both);
    }
}
