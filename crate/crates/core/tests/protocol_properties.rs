use std::io::Cursor;

use biokm::protocol::{
    decode_frame, encode_frame, read_chunk, write_chunk, Command, Decoded, Frame, FrameDecoder, ProtocolError,
    MAX_PAYLOAD,
};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn token() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_.:#@\\-éü漢]{1,12}"
}

fn frame() -> impl Strategy<Value = (Frame, Vec<u8>)> {
    (0..Command::ALL.len(), proptest::collection::vec(token(), 3), proptest::collection::vec(any::<u8>(), 0..600), any::<bool>())
        .prop_map(|(ci, toks, payload, extra)| {
            let command = Command::ALL[ci];
            if command == Command::Msg {
                return (Frame::msg(&toks[0], payload.len()).unwrap(), payload);
            }
            let (lo, hi) = command.arity();
            let n = if extra { hi } else { lo };
            (Frame::new(command, toks[..n].to_vec()).unwrap(), Vec::new())
        })
}

fn encode_all(frames: &[(Frame, Vec<u8>)]) -> Vec<u8> {
    frames.iter().flat_map(|(f, p)| encode_frame(f, p).unwrap()).collect()
}

fn drain(dec: &mut FrameDecoder, out: &mut Vec<(Frame, Vec<u8>)>) {
    while let Some((f, p, _)) = dec.next_frame().unwrap() {
        out.push((f, p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, rng_seed: RngSeed::Fixed(0x5eed), ..ProptestConfig::default() })]

    #[test]
    fn encode_decode_round_trip((f, p) in frame()) {
        let bytes = encode_frame(&f, &p).unwrap();
        match decode_frame(&bytes).unwrap() {
            Decoded::Frame { frame, payload, consumed } => {
                prop_assert_eq!(frame, f);
                prop_assert_eq!(payload, p);
                prop_assert_eq!(consumed, bytes.len());
            }
            Decoded::NeedMore => prop_assert!(false, "complete frame reported as partial"),
        }
        // every strict prefix is incomplete, never an error
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            prop_assert_eq!(decode_frame(&bytes[..cut]).unwrap(), Decoded::NeedMore);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn any_split_of_a_stream_yields_the_same_frames(
        frames in proptest::collection::vec(frame(), 1..12),
        cuts in proptest::collection::vec(any::<prop::sample::Index>(), 0..20),
    ) {
        let stream = encode_all(&frames);
        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
        points.push(0);
        points.push(stream.len());
        points.sort_unstable();
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for w in points.windows(2) {
            dec.push(&stream[w[0]..w[1]]);
            drain(&mut dec, &mut got);
        }
        prop_assert_eq!(got, frames);
        prop_assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn byte_by_byte_feeding(frames in proptest::collection::vec(frame(), 1..6)) {
        let stream = encode_all(&frames);
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for b in &stream {
            dec.push(std::slice::from_ref(b));
            drain(&mut dec, &mut got);
        }
        prop_assert_eq!(got, frames);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = decode_frame(&bytes);
        let mut dec = FrameDecoder::new();
        dec.push(&bytes);
        for _ in 0..10 {
            if !matches!(dec.next_frame(), Ok(Some(_))) {
                break;
            }
        }
    }

    #[test]
    fn chunks_round_trip(chunks in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..2000), 0..8)) {
        let mut wire = Vec::new();
        for c in &chunks {
            prop_assert_eq!(write_chunk(&mut wire, c).unwrap(), 4 + c.len());
        }
        write_chunk(&mut wire, &[]).unwrap();
        let mut r = Cursor::new(wire);
        for c in &chunks {
            prop_assert_eq!(&read_chunk(&mut r).unwrap().unwrap(), c);
        }
        prop_assert_eq!(read_chunk(&mut r).unwrap(), Some(Vec::new()));
        prop_assert_eq!(read_chunk(&mut r).unwrap(), None);
    }
}

#[test]
fn malformed_lines_are_rejected() {
    let cases: &[&[u8]] = &[
        b"HELLO x\r\n",
        b"LOGIN\r\n",
        b"LOGIN a b\r\n",
        b"LOGIN  a\r\n",
        b"MSG bob\r\n",
        b"LIST extra\r\n",
        b"login alice\r\n",
        b"LOGIN alice\n",
        b"\r\n",
    ];
    for &c in cases {
        assert!(
            matches!(decode_frame(c), Err(ProtocolError::MalformedFrame(_))),
            "{:?} -> {:?}",
            String::from_utf8_lossy(c),
            decode_frame(c)
        );
    }
    for c in [&b"MSG bob -1\r\n"[..], b"MSG bob 65537\r\n", b"MSG bob x\r\n"] {
        assert!(matches!(decode_frame(c), Err(ProtocolError::PayloadLengthError(_))), "{c:?}");
    }
}

#[test]
fn payload_bytes_are_opaque() {
    // CRLF and spaces inside a payload are not frame boundaries
    let body = b"line one\r\nLOGIN mallory\r\n\0\xff";
    let mut stream = encode_frame(&Frame::msg("bob", body.len()).unwrap(), body).unwrap();
    stream.extend(encode_frame(&Frame::ok(), b"").unwrap());
    let mut dec = FrameDecoder::new();
    dec.push(&stream);
    let (f, p, _) = dec.next_frame().unwrap().unwrap();
    assert_eq!((f.command, p.as_slice()), (Command::Msg, &body[..]));
    assert_eq!(dec.next_frame().unwrap().unwrap().0, Frame::ok());
}

#[test]
fn largest_payload_is_accepted() {
    let body = vec![b'x'; MAX_PAYLOAD];
    let bytes = encode_frame(&Frame::msg("bob", body.len()).unwrap(), &body).unwrap();
    assert!(matches!(decode_frame(&bytes).unwrap(), Decoded::Frame { .. }));
    assert!(Frame::msg("bob", MAX_PAYLOAD + 1).is_err());
}
