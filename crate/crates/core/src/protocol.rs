//! Messenger wire format.
//!
//! The control channel carries CRLF-terminated text frames of the form
//! `COMMAND arg1 ... argN\r\n`. A `MSG` frame is followed immediately by
//! `payload_len` raw bytes. File data travels on a separate data channel as
//! big-endian `u32` length-prefixed chunks; a zero-length chunk ends a
//! transfer.

use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use thiserror::Error;

/// Largest payload a `MSG` frame or a data chunk may carry.
pub const MAX_PAYLOAD: usize = 65536;

/// Longest control line accepted before the decoder gives up on a client.
pub const MAX_LINE: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{command} takes {expected} argument(s), got {got}")]
    ArityViolation {
        command: Command,
        expected: &'static str,
        got: usize,
    },
    #[error("invalid token {0:?}")]
    TokenError(String),
    #[error("payload is {got} bytes but the frame declares {declared}")]
    PayloadMismatch { declared: usize, got: usize },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("bad payload length {0:?}")]
    PayloadLengthError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Command {
    Login,
    Msg,
    Invite,
    List,
    Ping,
    Pong,
    FileOffer,
    FileAccept,
    Quit,
    Ok,
    Err,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Login,
        Command::Msg,
        Command::Invite,
        Command::List,
        Command::Ping,
        Command::Pong,
        Command::FileOffer,
        Command::FileAccept,
        Command::Quit,
        Command::Ok,
        Command::Err,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Login => "LOGIN",
            Command::Msg => "MSG",
            Command::Invite => "INVITE",
            Command::List => "LIST",
            Command::Ping => "PING",
            Command::Pong => "PONG",
            Command::FileOffer => "FILE_OFFER",
            Command::FileAccept => "FILE_ACCEPT",
            Command::Quit => "QUIT",
            Command::Ok => "OK",
            Command::Err => "ERR",
        }
    }

    /// Inclusive bounds on the number of arguments.
    pub fn arity(self) -> (usize, usize) {
        match self {
            Command::Login | Command::Invite | Command::Ping | Command::Pong | Command::Err => {
                (1, 1)
            }
            Command::Msg | Command::FileAccept => (2, 2),
            Command::FileOffer => (3, 3),
            Command::List | Command::Quit => (0, 0),
            Command::Ok => (0, 1),
        }
    }

    fn arity_text(self) -> &'static str {
        match self.arity() {
            (0, 0) => "0",
            (1, 1) => "1",
            (2, 2) => "2",
            (3, 3) => "3",
            _ => "0 or 1",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, ProtocolError> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ProtocolError::MalformedFrame(format!("unknown command {s:?}")))
    }
}

/// One control-channel message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub command: Command,
    pub args: Vec<String>,
    /// Nonzero only for `MSG`, where it mirrors the second argument.
    pub payload_len: usize,
}

impl Frame {
    /// Builds a frame and checks arity and token rules.
    pub fn new<I, S>(command: Command, args: I) -> Result<Frame, ProtocolError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let args: Vec<String> = args.into_iter().map(Into::into).collect();
        let payload_len = if command == Command::Msg && args.len() == 2 {
            parse_payload_len(&args[1])?
        } else {
            0
        };
        let frame = Frame {
            command,
            args,
            payload_len,
        };
        frame.validate()?;
        Ok(frame)
    }

    /// A `MSG` frame addressed to (or from) `peer` announcing `len` payload bytes.
    pub fn msg(peer: &str, len: usize) -> Result<Frame, ProtocolError> {
        Frame::new(Command::Msg, [peer.to_string(), len.to_string()])
    }

    pub fn ok() -> Frame {
        Frame {
            command: Command::Ok,
            args: Vec::new(),
            payload_len: 0,
        }
    }

    pub fn ok_with(value: impl Into<String>) -> Result<Frame, ProtocolError> {
        Frame::new(Command::Ok, [value.into()])
    }

    pub fn err(code: &str) -> Frame {
        Frame {
            command: Command::Err,
            args: vec![code.to_string()],
            payload_len: 0,
        }
    }

    pub fn arg(&self, i: usize) -> &str {
        self.args.get(i).map(String::as_str).unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let (lo, hi) = self.command.arity();
        if self.args.len() < lo || self.args.len() > hi {
            return Err(ProtocolError::ArityViolation {
                command: self.command,
                expected: self.command.arity_text(),
                got: self.args.len(),
            });
        }
        for a in &self.args {
            check_token(a)?;
        }
        let expected_len = if self.command == Command::Msg {
            parse_payload_len(&self.args[1])?
        } else {
            0
        };
        if expected_len != self.payload_len {
            return Err(ProtocolError::PayloadMismatch {
                declared: expected_len,
                got: self.payload_len,
            });
        }
        Ok(())
    }

    /// Length of the encoded control line including CRLF, excluding payload.
    pub fn line_len(&self) -> usize {
        self.command.as_str().len() + self.args.iter().map(|a| a.len() + 1).sum::<usize>() + 2
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command.as_str())?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

fn check_token(token: &str) -> Result<(), ProtocolError> {
    if token.is_empty() || token.contains([' ', '\r', '\n']) {
        return Err(ProtocolError::TokenError(token.to_string()));
    }
    Ok(())
}

fn parse_payload_len(token: &str) -> Result<usize, ProtocolError> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ProtocolError::PayloadLengthError(token.to_string()));
    }
    match token.parse::<usize>() {
        Ok(n) if n <= MAX_PAYLOAD => Ok(n),
        _ => Err(ProtocolError::PayloadLengthError(token.to_string())),
    }
}

/// Serializes `frame` followed by `payload`.
pub fn encode_frame(frame: &Frame, payload: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    frame.validate()?;
    if payload.len() != frame.payload_len {
        return Err(ProtocolError::PayloadMismatch {
            declared: frame.payload_len,
            got: payload.len(),
        });
    }
    let mut out = Vec::with_capacity(frame.line_len() + payload.len());
    out.extend_from_slice(frame.to_string().as_bytes());
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(payload);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Frame {
        frame: Frame,
        payload: Vec<u8>,
        consumed: usize,
    },
    NeedMore,
}

/// Parses one complete frame from the start of `buffer`.
///
/// Never looks past the end of the first frame. Returns `NeedMore` while the
/// line or its payload is still incomplete.
pub fn decode_frame(buffer: &[u8]) -> Result<Decoded, ProtocolError> {
    let Some(lf) = buffer.iter().position(|&b| b == b'\n') else {
        if buffer.len() > MAX_LINE {
            return Err(ProtocolError::MalformedFrame("control line too long".into()));
        }
        return Ok(Decoded::NeedMore);
    };
    if lf == 0 || buffer[lf - 1] != b'\r' {
        return Err(ProtocolError::MalformedFrame("line feed without carriage return".into()));
    }
    let nl = lf - 1;
    let line = std::str::from_utf8(&buffer[..nl])
        .map_err(|_| ProtocolError::MalformedFrame("line is not UTF-8".into()))?;
    let mut parts = line.split(' ');
    let command: Command = parts.next().unwrap_or_default().parse()?;
    let args: Vec<&str> = parts.collect();
    let frame = Frame::new(command, args.iter().copied()).map_err(|e| match e {
        ProtocolError::PayloadLengthError(_) => e,
        other => ProtocolError::MalformedFrame(other.to_string()),
    })?;
    let line_end = nl + 2;
    let total = line_end + frame.payload_len;
    if buffer.len() < total {
        return Ok(Decoded::NeedMore);
    }
    Ok(Decoded::Frame {
        payload: buffer[line_end..total].to_vec(),
        frame,
        consumed: total,
    })
}

/// Incremental decoder over a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pops the next complete frame, returning its payload and encoded size.
    pub fn next_frame(&mut self) -> Result<Option<(Frame, Vec<u8>, usize)>, ProtocolError> {
        match decode_frame(&self.buf)? {
            Decoded::NeedMore => Ok(None),
            Decoded::Frame {
                frame,
                payload,
                consumed,
            } => {
                self.buf.drain(..consumed);
                Ok(Some((frame, payload, consumed)))
            }
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Writes one length-prefixed chunk and returns the bytes put on the wire.
pub fn write_chunk<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<usize> {
    if bytes.len() > MAX_PAYLOAD {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("chunk of {} bytes exceeds {MAX_PAYLOAD}", bytes.len()),
        ));
    }
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(bytes)?;
    Ok(4 + bytes.len())
}

/// Reads one chunk. `Ok(None)` means the peer closed cleanly before a prefix.
pub fn read_chunk<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut prefix[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        filled += n;
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_PAYLOAD {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("chunk length {len} exceeds {MAX_PAYLOAD}"),
        ));
    }
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    Ok(Some(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_login() {
        let f = Frame::new(Command::Login, ["lady_engineer"]).unwrap();
        assert_eq!(encode_frame(&f, b"").unwrap(), b"LOGIN lady_engineer\r\n");
    }

    #[test]
    fn encode_msg_with_payload() {
        let f = Frame::new(Command::Msg, ["bob", "5"]).unwrap();
        assert_eq!(encode_frame(&f, b"hello").unwrap(), b"MSG bob 5\r\nhello");
    }

    #[test]
    fn list_with_argument_is_rejected() {
        let err = Frame::new(Command::List, ["x"]).unwrap_err();
        assert!(matches!(err, ProtocolError::ArityViolation { got: 1, .. }));
    }

    #[test]
    fn tokens_may_not_contain_separators() {
        for bad in ["a b", "a\r", "a\nb", ""] {
            assert!(matches!(
                Frame::new(Command::Login, [bad]),
                Err(ProtocolError::TokenError(_))
            ));
        }
    }

    #[test]
    fn payload_must_match_declared_length() {
        let f = Frame::msg("bob", 3).unwrap();
        assert!(matches!(
            encode_frame(&f, b"toolong"),
            Err(ProtocolError::PayloadMismatch { .. })
        ));
    }

    #[test]
    fn decode_login() {
        let got = decode_frame(b"LOGIN alice\r\n").unwrap();
        let Decoded::Frame {
            frame,
            payload,
            consumed,
        } = got
        else {
            panic!("expected a frame");
        };
        assert_eq!(frame.command, Command::Login);
        assert_eq!(frame.args, vec!["alice"]);
        assert!(payload.is_empty());
        assert_eq!(consumed, 13);
    }

    #[test]
    fn decode_incomplete_payload() {
        assert_eq!(decode_frame(b"MSG bob 5\r\nhel").unwrap(), Decoded::NeedMore);
        assert_eq!(decode_frame(b"MSG bob 5\r").unwrap(), Decoded::NeedMore);
        assert_eq!(decode_frame(b"").unwrap(), Decoded::NeedMore);
    }

    #[test]
    fn decode_stops_at_first_frame() {
        let got = decode_frame(b"PING 1\r\nPONG 1\r\n").unwrap();
        assert!(matches!(got, Decoded::Frame { consumed: 8, .. }));
    }

    #[test]
    fn decode_rejects_unknown_and_bad_arity() {
        assert!(matches!(
            decode_frame(b"HELLO x\r\n"),
            Err(ProtocolError::MalformedFrame(_))
        ));
        assert!(matches!(
            decode_frame(b"QUIT now\r\n"),
            Err(ProtocolError::MalformedFrame(_))
        ));
        assert!(matches!(
            decode_frame(b"LOGIN  alice\r\n"),
            Err(ProtocolError::MalformedFrame(_))
        ));
    }

    #[test]
    fn decode_rejects_bad_payload_length() {
        for line in [
            &b"MSG bob 65537\r\n"[..],
            b"MSG bob -1\r\n",
            b"MSG bob five\r\n",
            b"MSG bob +5\r\n",
        ] {
            assert!(
                matches!(decode_frame(line), Err(ProtocolError::PayloadLengthError(_))),
                "{:?}",
                String::from_utf8_lossy(line)
            );
        }
        assert!(decode_frame(b"MSG bob 65536\r\n").is_ok());
    }

    #[test]
    fn overlong_line_is_malformed() {
        let junk = vec![b'A'; MAX_LINE + 1];
        assert!(matches!(
            decode_frame(&junk),
            Err(ProtocolError::MalformedFrame(_))
        ));
    }

    #[test]
    fn ok_takes_zero_or_one_argument() {
        assert!(Frame::new(Command::Ok, Vec::<String>::new()).is_ok());
        assert!(Frame::new(Command::Ok, ["17"]).is_ok());
        assert!(Frame::new(Command::Ok, ["1", "2"]).is_err());
    }

    #[test]
    fn chunks_round_trip() {
        let mut wire = Vec::new();
        assert_eq!(write_chunk(&mut wire, b"abc").unwrap(), 7);
        write_chunk(&mut wire, b"").unwrap();
        assert_eq!(&wire[..4], &[0, 0, 0, 3]);
        let mut r = &wire[..];
        assert_eq!(read_chunk(&mut r).unwrap().unwrap(), b"abc");
        assert_eq!(read_chunk(&mut r).unwrap().unwrap(), b"");
        assert_eq!(read_chunk(&mut r).unwrap(), None);
    }

    #[test]
    fn oversized_chunk_prefix_is_rejected() {
        let wire = (MAX_PAYLOAD as u32 + 1).to_be_bytes();
        let mut r = &wire[..];
        assert_eq!(
            read_chunk(&mut r).unwrap_err().kind(),
            io::ErrorKind::InvalidData
        );
        assert!(write_chunk(&mut Vec::new(), &vec![0; MAX_PAYLOAD + 1]).is_err());
    }

    #[test]
    fn truncated_chunk_is_eof() {
        let mut r = &[0u8, 0, 0, 4, b'a'][..];
        assert_eq!(
            read_chunk(&mut r).unwrap_err().kind(),
            io::ErrorKind::UnexpectedEof
        );
    }
}
