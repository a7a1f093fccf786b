//! Framed byte channels between protocol parties, with per-endpoint byte
//! accounting. Frames are tag (4 ASCII bytes) + length (u64 little-endian) +
//! payload, both on TCP streams and on the in-process channels the tests use.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};

use super::ring::RingElem;
use super::MpcError;

pub type Tag = [u8; 4];

pub const TAG_INPUT_DATA: Tag = *b"INPD";
pub const TAG_INPUT_WEIGHTS: Tag = *b"INPW";
pub const TAG_MUL_OPEN: Tag = *b"MULX";
pub const TAG_CMP_BITS: Tag = *b"CMPB";
pub const TAG_OUT_VERDICT: Tag = *b"OUTV";
pub const TAG_OUT_MODEL: Tag = *b"OUTM";
pub const TAG_ABORT: Tag = *b"ABRT";

/// Hard cap on a single frame, to fail fast on corrupt length prefixes.
pub const MAX_FRAME_BYTES: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub tag: Tag,
    pub payload: Vec<u8>,
}

pub trait Channel: Send {
    fn send(&mut self, tag: Tag, payload: &[u8]) -> Result<(), MpcError>;
    fn recv(&mut self) -> Result<ProtocolMessage, MpcError>;
    fn bytes_sent(&self) -> u64;
    fn bytes_received(&self) -> u64;
}

/// Receives and requires a particular tag; anything else is a protocol
/// violation (an `ABRT` is surfaced as a session abort).
pub fn expect(chan: &mut dyn Channel, tag: Tag) -> Result<Vec<u8>, MpcError> {
    let msg = chan.recv()?;
    if msg.tag == TAG_ABORT {
        return Err(MpcError::Aborted);
    }
    if msg.tag != tag {
        return Err(MpcError::Protocol(format!(
            "expected tag {:?}, got {:?}",
            tag_str(tag),
            tag_str(msg.tag)
        )));
    }
    Ok(msg.payload)
}

pub fn tag_str(tag: Tag) -> String {
    String::from_utf8_lossy(&tag).into_owned()
}

/// In-process endpoint backed by unbounded mpsc queues.
pub struct InProcChannel {
    tx: Sender<ProtocolMessage>,
    rx: Receiver<ProtocolMessage>,
    sent: u64,
    received: u64,
}

/// A connected pair of in-process endpoints.
pub fn in_proc_pair() -> (InProcChannel, InProcChannel) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        InProcChannel { tx: tx_a, rx: rx_a, sent: 0, received: 0 },
        InProcChannel { tx: tx_b, rx: rx_b, sent: 0, received: 0 },
    )
}

impl Channel for InProcChannel {
    fn send(&mut self, tag: Tag, payload: &[u8]) -> Result<(), MpcError> {
        self.sent += 12 + payload.len() as u64;
        self.tx
            .send(ProtocolMessage { tag, payload: payload.to_vec() })
            .map_err(|_| MpcError::ChannelClosed)
    }

    fn recv(&mut self) -> Result<ProtocolMessage, MpcError> {
        let msg = self.rx.recv().map_err(|_| MpcError::ChannelClosed)?;
        self.received += 12 + msg.payload.len() as u64;
        Ok(msg)
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

/// TCP endpoint with the same framing.
pub struct TcpChannel {
    stream: TcpStream,
    sent: u64,
    received: u64,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Self {
        stream.set_nodelay(true).ok();
        Self { stream, sent: 0, received: 0 }
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, tag: Tag, payload: &[u8]) -> Result<(), MpcError> {
        let mut header = [0u8; 12];
        header[..4].copy_from_slice(&tag);
        header[4..].copy_from_slice(&(payload.len() as u64).to_le_bytes());
        self.stream.write_all(&header).map_err(net_err)?;
        self.stream.write_all(payload).map_err(net_err)?;
        self.sent += 12 + payload.len() as u64;
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage, MpcError> {
        let mut header = [0u8; 12];
        self.stream.read_exact(&mut header).map_err(net_err)?;
        let mut tag = [0u8; 4];
        tag.copy_from_slice(&header[..4]);
        let len = u64::from_le_bytes(header[4..].try_into().unwrap());
        if len > MAX_FRAME_BYTES {
            return Err(MpcError::Protocol(format!("frame length {len} exceeds cap")));
        }
        let mut payload = vec![0u8; len as usize];
        self.stream.read_exact(&mut payload).map_err(net_err)?;
        self.received += 12 + len;
        Ok(ProtocolMessage { tag, payload })
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

fn net_err(e: std::io::Error) -> MpcError {
    MpcError::Io(e.to_string())
}

pub fn encode_ring(values: &[RingElem]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.0.to_le_bytes());
    }
    out
}

pub fn decode_ring(payload: &[u8]) -> Result<Vec<RingElem>, MpcError> {
    if payload.len() % 8 != 0 {
        return Err(MpcError::Protocol("ring payload not a multiple of 8 bytes".into()));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| RingElem(u64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

pub fn encode_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + bits.len() / 8 + 1);
    out.extend_from_slice(&(bits.len() as u64).to_le_bytes());
    let mut byte = 0u8;
    for (i, &b) in bits.iter().enumerate() {
        if b {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            out.push(byte);
            byte = 0;
        }
    }
    if bits.len() % 8 != 0 {
        out.push(byte);
    }
    out
}

pub fn decode_bits(payload: &[u8]) -> Result<Vec<bool>, MpcError> {
    if payload.len() < 8 {
        return Err(MpcError::Protocol("bit payload too short".into()));
    }
    let n = u64::from_le_bytes(payload[..8].try_into().unwrap()) as usize;
    let body = &payload[8..];
    if body.len() != n / 8 + usize::from(n % 8 != 0) {
        return Err(MpcError::Protocol("bit payload length mismatch".into()));
    }
    Ok((0..n).map(|i| (body[i / 8] >> (i % 8)) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_proc_round_trip_counts_bytes() {
        let (mut a, mut b) = in_proc_pair();
        a.send(TAG_MUL_OPEN, &[1, 2, 3]).unwrap();
        let msg = b.recv().unwrap();
        assert_eq!(msg.tag, TAG_MUL_OPEN);
        assert_eq!(msg.payload, vec![1, 2, 3]);
        assert_eq!(a.bytes_sent(), 15);
        assert_eq!(b.bytes_received(), 15);
    }

    #[test]
    fn tcp_round_trip() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            let mut chan = TcpChannel::new(s);
            let msg = chan.recv().unwrap();
            chan.send(msg.tag, &msg.payload).unwrap();
        });
        let mut chan = TcpChannel::new(TcpStream::connect(addr).unwrap());
        chan.send(TAG_CMP_BITS, b"hello").unwrap();
        let echo = chan.recv().unwrap();
        assert_eq!(echo.tag, TAG_CMP_BITS);
        assert_eq!(echo.payload, b"hello");
        t.join().unwrap();
    }

    #[test]
    fn ring_and_bit_codecs_round_trip() {
        let values = vec![RingElem(0), RingElem(u64::MAX), RingElem(12345)];
        assert_eq!(decode_ring(&encode_ring(&values)).unwrap(), values);
        let bits = vec![true, false, true, true, false, false, true, false, true];
        assert_eq!(decode_bits(&encode_bits(&bits)).unwrap(), bits);
        assert!(decode_ring(&[1, 2, 3]).is_err());
    }

    #[test]
    fn expect_rejects_wrong_tags() {
        let (mut a, mut b) = in_proc_pair();
        a.send(TAG_ABORT, &[]).unwrap();
        assert!(matches!(expect(&mut b, TAG_MUL_OPEN), Err(MpcError::Aborted)));
        a.send(TAG_OUT_MODEL, &[]).unwrap();
        assert!(matches!(expect(&mut b, TAG_MUL_OPEN), Err(MpcError::Protocol(_))));
    }
}
