//! Socket plumbing for running the four roles as separate processes (or
//! threads): each server listens on one address, every dialing role opens
//! with a `HELO` frame naming its role and session, and the server routes
//! the connection accordingly.

use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use super::ProtoError;
use crate::mpc::channel::{Channel, TcpChannel};

pub const TAG_HELLO: [u8; 4] = *b"HELO";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Prover,
    Peer,
    Verifier,
}

impl Role {
    fn byte(self) -> u8 {
        match self {
            Role::Prover => 0,
            Role::Peer => 1,
            Role::Verifier => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Role> {
        match b {
            0 => Some(Role::Prover),
            1 => Some(Role::Peer),
            2 => Some(Role::Verifier),
            _ => None,
        }
    }
}

/// Dials a server and introduces this role.
pub fn dial<A: ToSocketAddrs>(
    addr: A,
    role: Role,
    session_id: u64,
) -> Result<TcpChannel, ProtoError> {
    let stream = TcpStream::connect(addr)
        .map_err(|e| ProtoError::Violation(format!("connect failed: {e}")))?;
    let mut chan = TcpChannel::new(stream);
    let mut payload = vec![role.byte()];
    payload.extend_from_slice(&session_id.to_le_bytes());
    chan.send(TAG_HELLO, &payload)?;
    Ok(chan)
}

/// The three inbound connections a server expects, in whatever order the
/// dialing roles arrive.
pub struct ServerLinks {
    pub prover: TcpChannel,
    pub peer: Option<TcpChannel>,
    pub verifier: TcpChannel,
}

/// Accepts connections until prover and verifier (and, when
/// `expect_peer`, the peer server) have introduced themselves.
pub fn accept_links(
    listener: &TcpListener,
    session_id: u64,
    expect_peer: bool,
) -> Result<ServerLinks, ProtoError> {
    let mut prover = None;
    let mut peer = None;
    let mut verifier = None;
    while prover.is_none() || verifier.is_none() || (expect_peer && peer.is_none()) {
        let (stream, _) = listener
            .accept()
            .map_err(|e| ProtoError::Violation(format!("accept failed: {e}")))?;
        let mut chan = TcpChannel::new(stream);
        let msg = chan.recv()?;
        if msg.tag != TAG_HELLO || msg.payload.len() != 9 {
            return Err(ProtoError::Violation("connection did not open with HELO".into()));
        }
        let sid = u64::from_le_bytes(msg.payload[1..].try_into().unwrap());
        if sid != session_id {
            return Err(ProtoError::Violation(format!(
                "session id mismatch: got {sid}, expected {session_id}"
            )));
        }
        match Role::from_byte(msg.payload[0]) {
            Some(Role::Prover) => prover = Some(chan),
            Some(Role::Peer) => peer = Some(chan),
            Some(Role::Verifier) => verifier = Some(chan),
            None => return Err(ProtoError::Violation("unknown role in HELO".into())),
        }
    }
    Ok(ServerLinks {
        prover: prover.expect("loop exit"),
        peer,
        verifier: verifier.expect("loop exit"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_routing() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let dialer = std::thread::spawn(move || {
            let _p = dial(addr, Role::Prover, 7).unwrap();
            let _v = dial(addr, Role::Verifier, 7).unwrap();
            // keep the sockets alive until the server has routed them
            std::thread::sleep(std::time::Duration::from_millis(100));
        });
        let links = accept_links(&listener, 7, false).unwrap();
        assert!(links.peer.is_none());
        dialer.join().unwrap();
    }

    #[test]
    fn session_id_mismatch_is_rejected() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let dialer = std::thread::spawn(move || {
            let _p = dial(addr, Role::Prover, 1).unwrap();
            std::thread::sleep(std::time::Duration::from_millis(100));
        });
        assert!(accept_links(&listener, 2, false).is_err());
        dialer.join().unwrap();
    }
}
