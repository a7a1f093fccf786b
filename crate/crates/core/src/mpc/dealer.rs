//! Trusted dealer for correlated randomness: Beaver triples over the ring
//! (scalar and matrix form), bit triples over GF(2), and masked-opening
//! material (a random ring element with arithmetic shares of itself and of
//! its high bits, plus XOR shares of its bit decomposition). The dealer is
//! offline: it derives both halves from a seed and never sees inputs.
//! Material is consumed by value, so a triple cannot be used twice.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ring::{ring_matmul, RingElem, RING_BITS};
use super::share::Party;
use super::MpcError;

const DEALER_MAGIC: &[u8; 4] = b"DLR1";

/// One party's share of a multiplication triple c = a * b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingTripleShare {
    pub a: RingElem,
    pub b: RingElem,
    pub c: RingElem,
}

/// One party's share of a matrix triple C = A · B with A (n×k), B (k×m).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatTripleShare {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub a: Vec<RingElem>,
    pub b: Vec<RingElem>,
    pub c: Vec<RingElem>,
}

/// XOR share of an AND triple c = a ∧ b.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitTripleShare {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

/// One party's piece of a masked-opening tuple for a random r: an arithmetic
/// share of r, an arithmetic share of r >> f (logical), and XOR shares of
/// every bit of r.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdaBitShare {
    pub value: RingElem,
    pub hi: RingElem,
    pub bits: Vec<bool>,
}

/// How much material a session needs, fixed up front.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaterialRequest {
    pub ring_triples: usize,
    pub bit_triples: usize,
    pub edabits: usize,
    /// (n, k, m) per matrix multiplication, in consumption order.
    pub mat_shapes: Vec<(usize, usize, usize)>,
    pub frac_bits: u32,
}

/// One party's half of the generated material.
#[derive(Debug, Clone, PartialEq)]
pub struct DealerHalf {
    pub party: Party,
    pub frac_bits: u32,
    ring_triples: VecDeque<RingTripleShare>,
    bit_triples: VecDeque<BitTripleShare>,
    edabits: VecDeque<EdaBitShare>,
    mat_triples: VecDeque<MatTripleShare>,
    consumed_ring: usize,
    consumed_bits: usize,
    consumed_edabits: usize,
    consumed_mats: usize,
}

impl DealerHalf {
    pub fn take_ring_triple(&mut self) -> Result<RingTripleShare, MpcError> {
        self.consumed_ring += 1;
        self.ring_triples.pop_front().ok_or(MpcError::DealerExhausted("ring triples"))
    }

    pub fn take_ring_triples(&mut self, n: usize) -> Result<Vec<RingTripleShare>, MpcError> {
        (0..n).map(|_| self.take_ring_triple()).collect()
    }

    pub fn take_bit_triple(&mut self) -> Result<BitTripleShare, MpcError> {
        self.consumed_bits += 1;
        self.bit_triples.pop_front().ok_or(MpcError::DealerExhausted("bit triples"))
    }

    pub fn take_bit_triples(&mut self, n: usize) -> Result<Vec<BitTripleShare>, MpcError> {
        (0..n).map(|_| self.take_bit_triple()).collect()
    }

    pub fn take_edabit(&mut self) -> Result<EdaBitShare, MpcError> {
        self.consumed_edabits += 1;
        self.edabits.pop_front().ok_or(MpcError::DealerExhausted("edabits"))
    }

    pub fn take_edabits(&mut self, n: usize) -> Result<Vec<EdaBitShare>, MpcError> {
        (0..n).map(|_| self.take_edabit()).collect()
    }

    pub fn take_mat_triple(
        &mut self,
        n: usize,
        k: usize,
        m: usize,
    ) -> Result<MatTripleShare, MpcError> {
        self.consumed_mats += 1;
        let t = self.mat_triples.pop_front().ok_or(MpcError::DealerExhausted("matrix triples"))?;
        if (t.n, t.k, t.m) != (n, k, m) {
            return Err(MpcError::Protocol(format!(
                "matrix triple shape mismatch: have {:?}, need {:?}",
                (t.n, t.k, t.m),
                (n, k, m)
            )));
        }
        Ok(t)
    }

    /// (ring, bit, edabit, matrix) consumption counters.
    pub fn consumed(&self) -> (usize, usize, usize, usize) {
        (self.consumed_ring, self.consumed_bits, self.consumed_edabits, self.consumed_mats)
    }

    pub fn remaining(&self) -> (usize, usize, usize, usize) {
        (
            self.ring_triples.len(),
            self.bit_triples.len(),
            self.edabits.len(),
            self.mat_triples.len(),
        )
    }
}

fn split(v: RingElem, rng: &mut ChaCha8Rng) -> (RingElem, RingElem) {
    let s1 = RingElem(rng.next_u64());
    (s1, v - s1)
}

/// Generates both halves of the requested material, deterministically in the
/// seed. The algebraic relations hold by construction.
pub fn dealer_gen(req: &MaterialRequest, seed: u64) -> (DealerHalf, DealerHalf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h1 = DealerHalf {
        party: Party::P1,
        frac_bits: req.frac_bits,
        ring_triples: VecDeque::with_capacity(req.ring_triples),
        bit_triples: VecDeque::with_capacity(req.bit_triples),
        edabits: VecDeque::with_capacity(req.edabits),
        mat_triples: VecDeque::new(),
        consumed_ring: 0,
        consumed_bits: 0,
        consumed_edabits: 0,
        consumed_mats: 0,
    };
    let mut h2 = DealerHalf { party: Party::P2, ..h1.clone() };

    for _ in 0..req.ring_triples {
        let a = RingElem(rng.next_u64());
        let b = RingElem(rng.next_u64());
        let c = a * b;
        let (a1, a2) = split(a, &mut rng);
        let (b1, b2) = split(b, &mut rng);
        let (c1, c2) = split(c, &mut rng);
        h1.ring_triples.push_back(RingTripleShare { a: a1, b: b1, c: c1 });
        h2.ring_triples.push_back(RingTripleShare { a: a2, b: b2, c: c2 });
    }

    for _ in 0..req.bit_triples {
        let w = rng.next_u64();
        let a = w & 1 == 1;
        let b = (w >> 1) & 1 == 1;
        let c = a & b;
        let a1 = (w >> 2) & 1 == 1;
        let b1 = (w >> 3) & 1 == 1;
        let c1 = (w >> 4) & 1 == 1;
        h1.bit_triples.push_back(BitTripleShare { a: a1, b: b1, c: c1 });
        h2.bit_triples.push_back(BitTripleShare { a: a ^ a1, b: b ^ b1, c: c ^ c1 });
    }

    for _ in 0..req.edabits {
        let r = RingElem(rng.next_u64());
        let hi = r.lsr(req.frac_bits);
        let (r1, r2) = split(r, &mut rng);
        let (hi1, hi2) = split(hi, &mut rng);
        let mask = rng.next_u64();
        let bits1: Vec<bool> = (0..RING_BITS).map(|i| (mask >> i) & 1 == 1).collect();
        let bits2: Vec<bool> = (0..RING_BITS).map(|i| r.bit(i) ^ bits1[i as usize]).collect();
        h1.edabits.push_back(EdaBitShare { value: r1, hi: hi1, bits: bits1 });
        h2.edabits.push_back(EdaBitShare { value: r2, hi: hi2, bits: bits2 });
    }

    for &(n, k, m) in &req.mat_shapes {
        let a: Vec<RingElem> = (0..n * k).map(|_| RingElem(rng.next_u64())).collect();
        let b: Vec<RingElem> = (0..k * m).map(|_| RingElem(rng.next_u64())).collect();
        let c = ring_matmul(&a, &b, n, k, m);
        let mut mk = |v: &[RingElem], rng: &mut ChaCha8Rng| -> (Vec<RingElem>, Vec<RingElem>) {
            let mut s1 = Vec::with_capacity(v.len());
            let mut s2 = Vec::with_capacity(v.len());
            for &x in v {
                let (p, q) = split(x, rng);
                s1.push(p);
                s2.push(q);
            }
            (s1, s2)
        };
        let (a1, a2) = mk(&a, &mut rng);
        let (b1, b2) = mk(&b, &mut rng);
        let (c1, c2) = mk(&c, &mut rng);
        h1.mat_triples.push_back(MatTripleShare { n, k, m, a: a1, b: b1, c: c1 });
        h2.mat_triples.push_back(MatTripleShare { n, k, m, a: a2, b: b2, c: c2 });
    }

    (h1, h2)
}

/// Dealer handoff file: magic `DLR1`, party, seed, and the request counts.
/// Loading regenerates the stream and keeps this party's half.
pub fn save_dealer_file(
    path: &Path,
    party: Party,
    seed: u64,
    req: &MaterialRequest,
) -> Result<(), MpcError> {
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(DEALER_MAGIC).map_err(io_err)?;
    f.write_all(&[party.index() as u8]).map_err(io_err)?;
    f.write_all(&seed.to_le_bytes()).map_err(io_err)?;
    f.write_all(&req.frac_bits.to_le_bytes()).map_err(io_err)?;
    f.write_all(&(req.ring_triples as u64).to_le_bytes()).map_err(io_err)?;
    f.write_all(&(req.bit_triples as u64).to_le_bytes()).map_err(io_err)?;
    f.write_all(&(req.edabits as u64).to_le_bytes()).map_err(io_err)?;
    f.write_all(&(req.mat_shapes.len() as u32).to_le_bytes()).map_err(io_err)?;
    for &(n, k, m) in &req.mat_shapes {
        for v in [n, k, m] {
            f.write_all(&(v as u32).to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn load_dealer_file(path: &Path) -> Result<DealerHalf, MpcError> {
    let mut f = std::fs::File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(io_err)?;
    if &magic != DEALER_MAGIC {
        return Err(MpcError::Protocol(format!("bad dealer magic {magic:?}")));
    }
    let mut byte = [0u8; 1];
    f.read_exact(&mut byte).map_err(io_err)?;
    let party = match byte[0] {
        0 => Party::P1,
        1 => Party::P2,
        other => return Err(MpcError::Protocol(format!("bad party byte {other}"))),
    };
    let seed = read_u64(&mut f)?;
    let mut buf4 = [0u8; 4];
    f.read_exact(&mut buf4).map_err(io_err)?;
    let frac_bits = u32::from_le_bytes(buf4);
    let ring_triples = read_u64(&mut f)? as usize;
    let bit_triples = read_u64(&mut f)? as usize;
    let edabits = read_u64(&mut f)? as usize;
    f.read_exact(&mut buf4).map_err(io_err)?;
    let n_shapes = u32::from_le_bytes(buf4) as usize;
    let mut mat_shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let mut dims = [0usize; 3];
        for d in &mut dims {
            f.read_exact(&mut buf4).map_err(io_err)?;
            *d = u32::from_le_bytes(buf4) as usize;
        }
        mat_shapes.push((dims[0], dims[1], dims[2]));
    }
    let req = MaterialRequest { ring_triples, bit_triples, edabits, mat_shapes, frac_bits };
    let (h1, h2) = dealer_gen(&req, seed);
    Ok(match party {
        Party::P1 => h1,
        Party::P2 => h2,
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, MpcError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(u64::from_le_bytes(buf))
}

fn io_err(e: io::Error) -> MpcError {
    MpcError::Io(e.to_string())
}
