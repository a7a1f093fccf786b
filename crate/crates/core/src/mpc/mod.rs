//! Two-party additive secret sharing over Z_{2^64} with fixed-point
//! encoding: sharing and reconstruction, local linear algebra, Beaver
//! multiplication, exact truncation, secure comparison, and the trusted
//! dealer that provides correlated randomness without ever seeing inputs.

pub mod channel;
pub mod dealer;
pub mod gates;
pub mod ring;
pub mod share;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("value {0} is outside the fixed-point encoding range")]
    EncodeRange(f64),
    #[error("shape mismatch: got {got}, want {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("shares belong to the wrong parties for this operation")]
    PartyMismatch,
    #[error("fixed-point scale mismatch: {a} vs {b}")]
    FracMismatch { a: u32, b: u32 },
    #[error("dealer material exhausted: {0}")]
    DealerExhausted(&'static str),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("session aborted by peer")]
    Aborted,
    #[error("channel closed unexpectedly")]
    ChannelClosed,
    #[error("channel i/o: {0}")]
    Io(String),
}
