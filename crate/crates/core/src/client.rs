//! Blocking messenger client with socket-boundary counters.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::{self, Command, Frame, FrameDecoder, ProtocolError};
use crate::telemetry::SessionCounters;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connect to {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server closed the connection")]
    Closed,
    #[error("server replied ERR {0}")]
    Rejected(String),
    #[error("unexpected reply {0}")]
    Unexpected(String),
}

pub struct MessengerClient {
    stream: TcpStream,
    decoder: FrameDecoder,
    counters: Arc<SessionCounters>,
    peer: SocketAddr,
}

impl MessengerClient {
    pub fn connect<A: ToSocketAddrs + std::fmt::Display>(addr: A) -> Result<Self, ClientError> {
        let shown = addr.to_string();
        let stream = TcpStream::connect(&addr).map_err(|source| ClientError::Connect {
            addr: shown,
            source,
        })?;
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr()?;
        Ok(MessengerClient {
            stream,
            decoder: FrameDecoder::new(),
            counters: Arc::new(SessionCounters::new()),
            peer,
        })
    }

    pub fn counters(&self) -> &Arc<SessionCounters> {
        &self.counters
    }

    pub fn server_addr(&self) -> SocketAddr {
        self.peer
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.stream.set_read_timeout(t)
    }

    pub fn send(&mut self, frame: &Frame, payload: &[u8]) -> Result<(), ClientError> {
        let bytes = protocol::encode_frame(frame, payload)?;
        self.stream.write_all(&bytes)?;
        self.counters.record_sent(bytes.len());
        Ok(())
    }

    /// Writes raw bytes without framing; for exercising the server's parser.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    /// Next frame from the server, or `Closed` at end of stream.
    pub fn recv(&mut self) -> Result<(Frame, Vec<u8>), ClientError> {
        let mut buf = [0u8; 8192];
        loop {
            if let Some((frame, payload, size)) = self.decoder.next_frame()? {
                self.counters.record_received(size);
                return Ok((frame, payload));
            }
            let n = self.stream.read(&mut buf)?;
            if n == 0 {
                return Err(ClientError::Closed);
            }
            self.decoder.push(&buf[..n]);
        }
    }

    /// Receives a frame and turns `ERR` into an error.
    pub fn expect(&mut self, command: Command) -> Result<(Frame, Vec<u8>), ClientError> {
        let (frame, payload) = self.recv()?;
        match frame.command {
            c if c == command => Ok((frame, payload)),
            Command::Err => Err(ClientError::Rejected(frame.arg(0).to_string())),
            _ => Err(ClientError::Unexpected(frame.to_string())),
        }
    }

    /// Logs in and returns the server's uptime in milliseconds.
    pub fn login(&mut self, nick: &str) -> Result<f64, ClientError> {
        self.send(&Frame::new(Command::Login, [nick])?, b"")?;
        let (ok, _) = self.expect(Command::Ok)?;
        Ok(ok.arg(0).parse().unwrap_or(0.0))
    }

    pub fn message(&mut self, to: &str, body: &[u8]) -> Result<(), ClientError> {
        self.send(&Frame::msg(to, body.len())?, body)
    }

    /// One PING/PONG exchange; returns the round trip in milliseconds.
    pub fn ping(&mut self, nonce: &str) -> Result<f64, ClientError> {
        let t = Instant::now();
        self.send(&Frame::new(Command::Ping, [nonce])?, b"")?;
        let (pong, _) = self.expect(Command::Pong)?;
        if pong.arg(0) != nonce {
            return Err(ClientError::Unexpected(pong.to_string()));
        }
        Ok(t.elapsed().as_secs_f64() * 1000.0)
    }

    /// Sends QUIT, waits for the acknowledgement and the close.
    pub fn quit(mut self) -> Result<Arc<SessionCounters>, ClientError> {
        self.send(&Frame::new(Command::Quit, Vec::<String>::new())?, b"")?;
        self.expect(Command::Ok)?;
        let mut rest = [0u8; 256];
        while self.stream.read(&mut rest).unwrap_or(0) > 0 {}
        Ok(self.counters)
    }
}

/// Role announced in the first chunk of a data connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataRole {
    Send,
    Recv,
}

impl DataRole {
    pub fn hello(self, nick: &str) -> Vec<u8> {
        let tag = match self {
            DataRole::Send => "SEND",
            DataRole::Recv => "RECV",
        };
        format!("{tag} {nick}").into_bytes()
    }

    pub fn parse_hello(bytes: &[u8]) -> Option<(DataRole, String)> {
        let text = std::str::from_utf8(bytes).ok()?;
        let (tag, nick) = text.split_once(' ')?;
        let role = match tag {
            "SEND" => DataRole::Send,
            "RECV" => DataRole::Recv,
            _ => return None,
        };
        (!nick.is_empty()).then(|| (role, nick.to_string()))
    }
}

fn open_data(addr: SocketAddr, role: DataRole, nick: &str, counters: &SessionCounters) -> Result<TcpStream, ClientError> {
    let mut s = TcpStream::connect(addr).map_err(|source| ClientError::Connect {
        addr: addr.to_string(),
        source,
    })?;
    s.set_nodelay(true)?;
    let n = protocol::write_chunk(&mut s, &role.hello(nick))?;
    counters.record_sent(n);
    Ok(s)
}

/// Streams `data` to the data channel at `addr` in chunks of `chunk_size`,
/// then the zero-length terminator.
pub fn send_file(
    addr: SocketAddr,
    nick: &str,
    data: &[u8],
    chunk_size: usize,
    counters: &SessionCounters,
) -> Result<(), ClientError> {
    let mut s = open_data(addr, DataRole::Send, nick, counters)?;
    for chunk in data.chunks(chunk_size.clamp(1, protocol::MAX_PAYLOAD)) {
        counters.record_sent(protocol::write_chunk(&mut s, chunk)?);
    }
    counters.record_sent(protocol::write_chunk(&mut s, &[])?);
    s.flush()?;
    Ok(())
}

/// Reads a whole transfer from the data channel at `addr`.
pub fn receive_file(addr: SocketAddr, nick: &str, counters: &SessionCounters) -> Result<Vec<u8>, ClientError> {
    let mut s = open_data(addr, DataRole::Recv, nick, counters)?;
    let mut out = Vec::new();
    loop {
        match protocol::read_chunk(&mut s)? {
            None => return Err(ClientError::Closed),
            Some(chunk) => {
                counters.record_received(4 + chunk.len());
                if chunk.is_empty() {
                    return Ok(out);
                }
                out.extend_from_slice(&chunk);
            }
        }
    }
}
