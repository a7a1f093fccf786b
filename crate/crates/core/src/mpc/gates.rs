//! Interactive gates over additive shares: Beaver multiplication (scalar and
//! matrix), exact truncation, and secure comparison.
//!
//! Truncation and comparison share one masked-opening core. To process a
//! shared v, the parties open c = v + r for a dealer-provided random r whose
//! bit decomposition they hold in XOR shares. A borrow-propagation circuit
//! over the public c and the shared bits of r then yields, still in shares,
//! the borrow into the fraction boundary (β), the borrow out of the full
//! width (w, i.e. c < r), and the sign bit of v. With r's high part shared
//! arithmetically, the identity
//!
//!   (v >> f) = (c >> f) − (r >> f) − β + w·2^(64−f)      (logical shift)
//!
//! holds exactly over the ring, and the arithmetic shift follows by
//! subtracting sign·2^(64−f). Every step is integer-exact, which is what
//! makes the secure pipeline bit-identical to the plaintext fixed-point
//! reference.

use super::channel::{
    decode_bits, decode_ring, encode_bits, encode_ring, Channel, TAG_CMP_BITS, TAG_MUL_OPEN,
};
use super::dealer::DealerHalf;
use super::ring::{ring_matmul, FxEncoding, RingElem, RING_BITS};
use super::share::{sub_shares, Party, SharedVector};
use super::MpcError;

/// One party's compute context for a two-party session.
pub struct GateCtx<'a> {
    pub party: Party,
    pub material: &'a mut DealerHalf,
    pub chan: &'a mut dyn Channel,
}

/// One party's share of a row-major matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedMat {
    pub party: Party,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<RingElem>,
    pub frac_bits: u32,
}

impl SharedMat {
    pub fn from_vec(v: SharedVector, rows: usize, cols: usize) -> Result<Self, MpcError> {
        if v.len() != rows * cols {
            return Err(MpcError::ShapeMismatch { got: v.len(), want: rows * cols });
        }
        Ok(Self { party: v.party, rows, cols, data: v.shares, frac_bits: v.frac_bits })
    }

    pub fn to_vec(&self) -> SharedVector {
        SharedVector {
            party: self.party,
            shares: self.data.clone(),
            frac_bits: self.frac_bits,
        }
    }

    /// Local transpose.
    pub fn transpose(&self) -> SharedMat {
        let mut data = vec![RingElem::ZERO; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        SharedMat {
            party: self.party,
            rows: self.cols,
            cols: self.rows,
            data,
            frac_bits: self.frac_bits,
        }
    }
}

impl<'a> GateCtx<'a> {
    /// Sends this party's half of an opening and returns the other's;
    /// party 1 sends first, so the exchange can never deadlock.
    fn exchange(&mut self, tag: super::channel::Tag, payload: &[u8]) -> Result<Vec<u8>, MpcError> {
        match self.party {
            Party::P1 => {
                self.chan.send(tag, payload)?;
                Ok(super::channel::expect(self.chan, tag)?)
            }
            Party::P2 => {
                let other = super::channel::expect(self.chan, tag)?;
                self.chan.send(tag, payload)?;
                Ok(other)
            }
        }
    }

    /// Opens shared ring values: both parties learn the reconstruction.
    pub fn open(&mut self, shares: &[RingElem]) -> Result<Vec<RingElem>, MpcError> {
        let other = decode_ring(&self.exchange(TAG_MUL_OPEN, &encode_ring(shares))?)?;
        if other.len() != shares.len() {
            return Err(MpcError::ShapeMismatch { got: other.len(), want: shares.len() });
        }
        Ok(shares.iter().zip(&other).map(|(&a, &b)| a + b).collect())
    }

    /// Element-wise Beaver multiplication without truncation; the result
    /// scale is the sum of the input scales.
    pub fn mul_no_trunc(
        &mut self,
        x: &SharedVector,
        y: &SharedVector,
    ) -> Result<SharedVector, MpcError> {
        if x.len() != y.len() {
            return Err(MpcError::ShapeMismatch { got: y.len(), want: x.len() });
        }
        let triples = self.material.take_ring_triples(x.len())?;
        let mut masked = Vec::with_capacity(2 * x.len());
        for (i, t) in triples.iter().enumerate() {
            masked.push(x.shares[i] - t.a);
            masked.push(y.shares[i] - t.b);
        }
        let opened = self.open(&masked)?;
        let mut shares = Vec::with_capacity(x.len());
        for (i, t) in triples.iter().enumerate() {
            let d = opened[2 * i];
            let e = opened[2 * i + 1];
            let mut z = t.c + d * t.b + e * t.a;
            if self.party == Party::P1 {
                z = z + d * e;
            }
            shares.push(z);
        }
        Ok(SharedVector { party: self.party, shares, frac_bits: x.frac_bits + y.frac_bits })
    }

    /// Fixed-point multiplication: Beaver product followed by truncation back
    /// to the input scale. With zero fractional bits no truncation happens.
    pub fn beaver_mul(
        &mut self,
        x: &SharedVector,
        y: &SharedVector,
    ) -> Result<SharedVector, MpcError> {
        if x.frac_bits != y.frac_bits {
            return Err(MpcError::FracMismatch { a: x.frac_bits, b: y.frac_bits });
        }
        let product = self.mul_no_trunc(x, y)?;
        self.trunc_by(&product, x.frac_bits)
    }

    /// Matrix Beaver multiplication without truncation.
    pub fn matmul_no_trunc(
        &mut self,
        x: &SharedMat,
        y: &SharedMat,
    ) -> Result<SharedMat, MpcError> {
        if x.cols != y.rows {
            return Err(MpcError::ShapeMismatch { got: y.rows, want: x.cols });
        }
        let (n, k, m) = (x.rows, x.cols, y.cols);
        let t = self.material.take_mat_triple(n, k, m)?;
        let mut masked = Vec::with_capacity(n * k + k * m);
        masked.extend(x.data.iter().zip(&t.a).map(|(&v, &a)| v - a));
        masked.extend(y.data.iter().zip(&t.b).map(|(&v, &b)| v - b));
        let opened = self.open(&masked)?;
        let (d, e) = opened.split_at(n * k);
        let mut z = t.c.clone();
        for (zi, v) in z.iter_mut().zip(ring_matmul(d, &t.b, n, k, m)) {
            *zi = *zi + v;
        }
        for (zi, v) in z.iter_mut().zip(ring_matmul(&t.a, e, n, k, m)) {
            *zi = *zi + v;
        }
        if self.party == Party::P1 {
            for (zi, v) in z.iter_mut().zip(ring_matmul(d, e, n, k, m)) {
                *zi = *zi + v;
            }
        }
        Ok(SharedMat {
            party: self.party,
            rows: n,
            cols: m,
            data: z,
            frac_bits: x.frac_bits + y.frac_bits,
        })
    }

    /// Fixed-point matrix product: ring matmul at doubled scale, then one
    /// exact truncation per entry.
    pub fn matmul(&mut self, x: &SharedMat, y: &SharedMat) -> Result<SharedMat, MpcError> {
        if x.frac_bits != y.frac_bits {
            return Err(MpcError::FracMismatch { a: x.frac_bits, b: y.frac_bits });
        }
        let prod = self.matmul_no_trunc(x, y)?;
        let truncated = self.trunc_by(&prod.to_vec(), x.frac_bits)?;
        SharedMat::from_vec(truncated, prod.rows, prod.cols)
    }

    /// Multiplies by a public fixed-point constant and truncates back.
    pub fn mul_public_fx(&mut self, v: &SharedVector, c: f64) -> Result<SharedVector, MpcError> {
        let enc = FxEncoding::new(v.frac_bits).encode(c)?;
        let scaled = SharedVector {
            party: v.party,
            shares: v.shares.iter().map(|&s| s * enc).collect(),
            frac_bits: v.frac_bits * 2,
        };
        self.trunc_by(&scaled, v.frac_bits)
    }

    /// Exact arithmetic-shift truncation of every coordinate by `f` bits.
    pub fn trunc_by(&mut self, v: &SharedVector, f: u32) -> Result<SharedVector, MpcError> {
        if f == 0 {
            return Ok(v.clone());
        }
        let bits = self.masked_bit_extract(v, Some(f))?;
        let beta = self.b2a(&bits.beta_xor)?;
        let wrap = self.b2a(&bits.wrap_xor)?;
        let sign = self.b2a(&bits.sign_xor)?;
        let high_unit = RingElem(1u64 << (RING_BITS - f));
        let mut shares = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let c_hi = bits.c_open[i].lsr(f);
            let mut lsr = -bits.r_hi_shares[i] - beta.shares[i]
                + wrap.shares[i] * high_unit;
            if self.party == Party::P1 {
                lsr = lsr + c_hi;
            }
            shares.push(lsr - sign.shares[i] * high_unit);
        }
        Ok(SharedVector { party: self.party, shares, frac_bits: v.frac_bits - f })
    }

    /// Shared bit (x ≥ y), arithmetically shared, at scale zero. Ties yield 1.
    pub fn compare_ge(
        &mut self,
        x: &SharedVector,
        y: &SharedVector,
    ) -> Result<SharedVector, MpcError> {
        let sign = self.compare_ge_xor(x, y)?;
        let sign_arith = self.b2a(&sign.negated_sign)?;
        // sign here is already the NOT of the msb, i.e. the ≥ bit
        Ok(sign_arith)
    }

    /// XOR-shared (x ≥ y), for protocols that deliver the output bit as an
    /// XOR sharing (the direct two-party mode does).
    pub fn compare_ge_xor(
        &mut self,
        x: &SharedVector,
        y: &SharedVector,
    ) -> Result<XorBits, MpcError> {
        if x.frac_bits != y.frac_bits {
            return Err(MpcError::FracMismatch { a: x.frac_bits, b: y.frac_bits });
        }
        let d = sub_shares(x, y)?;
        let bits = self.masked_bit_extract(&d, None)?;
        // x ≥ y iff the sign bit of x − y is clear; party 1 negates
        let negated: Vec<bool> = bits
            .sign_xor
            .iter()
            .map(|&b| if self.party == Party::P1 { !b } else { b })
            .collect();
        Ok(XorBits { negated_sign: negated })
    }

    /// AND of two XOR-shared bit vectors, one round.
    pub fn and_xor(&mut self, a: &[bool], b: &[bool]) -> Result<Vec<bool>, MpcError> {
        if a.len() != b.len() {
            return Err(MpcError::ShapeMismatch { got: b.len(), want: a.len() });
        }
        let triples = self.material.take_bit_triples(a.len())?;
        let mut masked = Vec::with_capacity(2 * a.len());
        for (i, t) in triples.iter().enumerate() {
            masked.push(a[i] ^ t.a);
            masked.push(b[i] ^ t.b);
        }
        let opened = self.exchange_bits(&masked)?;
        let mut out = Vec::with_capacity(a.len());
        for (i, t) in triples.iter().enumerate() {
            let d = masked[2 * i] ^ opened[2 * i];
            let e = masked[2 * i + 1] ^ opened[2 * i + 1];
            let mut z = t.c ^ (d & t.b) ^ (e & t.a);
            if self.party == Party::P1 {
                z ^= d & e;
            }
            out.push(z);
        }
        Ok(out)
    }

    /// Converts XOR-shared bits into arithmetic shares at scale zero.
    pub fn b2a(&mut self, bits: &[bool]) -> Result<SharedVector, MpcError> {
        // [b] = [b1] + [b2] - 2 [b1·b2], inputs shared as (b1, 0) and (0, b2)
        let to_elem = |b: bool| if b { RingElem::ONE } else { RingElem::ZERO };
        let x = SharedVector {
            party: self.party,
            shares: bits
                .iter()
                .map(|&b| if self.party == Party::P1 { to_elem(b) } else { RingElem::ZERO })
                .collect(),
            frac_bits: 0,
        };
        let y = SharedVector {
            party: self.party,
            shares: bits
                .iter()
                .map(|&b| if self.party == Party::P2 { to_elem(b) } else { RingElem::ZERO })
                .collect(),
            frac_bits: 0,
        };
        let prod = self.mul_no_trunc(&x, &y)?;
        let two = RingElem(2);
        let shares = (0..bits.len())
            .map(|i| x.shares[i] + y.shares[i] - two * prod.shares[i])
            .collect();
        Ok(SharedVector { party: self.party, shares, frac_bits: 0 })
    }

    fn exchange_bits(&mut self, bits: &[bool]) -> Result<Vec<bool>, MpcError> {
        let other = decode_bits(&self.exchange(TAG_CMP_BITS, &encode_bits(bits))?)?;
        if other.len() != bits.len() {
            return Err(MpcError::ShapeMismatch { got: other.len(), want: bits.len() });
        }
        Ok(other)
    }

    /// The masked-opening core: opens c = v + r and runs the borrow circuit
    /// of c − r, yielding XOR shares of the sign bit of v, and when
    /// `f_split` is given, of the borrow into position f and the full-width
    /// borrow, plus this party's arithmetic share of r's high part.
    fn masked_bit_extract(
        &mut self,
        v: &SharedVector,
        f_split: Option<u32>,
    ) -> Result<MaskedBits, MpcError> {
        let m = v.len();
        let eda = self.material.take_edabits(m)?;
        let masked: Vec<RingElem> = v
            .shares
            .iter()
            .zip(&eda)
            .map(|(&s, e)| s + e.value)
            .collect();
        let c_open = self.open(&masked)?;

        // borrow chain of c − r, batched across the vector per bit position
        let mut borrow = vec![false; m];
        let mut beta_xor = vec![false; m];
        let mut wrap_xor = vec![false; m];
        let mut sign_xor = vec![false; m];
        for i in 0..RING_BITS {
            if f_split == Some(i) {
                beta_xor.copy_from_slice(&borrow);
            }
            if i == RING_BITS - 1 {
                for j in 0..m {
                    let c_bit = self.party == Party::P1 && c_open[j].bit(i);
                    sign_xor[j] = c_bit ^ eda[j].bits[i as usize] ^ borrow[j];
                }
            }
            // one AND per element: r_i ∧ borrow
            let r_bits: Vec<bool> = eda.iter().map(|e| e.bits[i as usize]).collect();
            let and = self.and_xor(&r_bits, &borrow)?;
            for j in 0..m {
                borrow[j] = if c_open[j].bit(i) {
                    and[j]
                } else {
                    // r ∨ borrow
                    r_bits[j] ^ borrow[j] ^ and[j]
                };
            }
        }
        wrap_xor.copy_from_slice(&borrow);

        Ok(MaskedBits {
            c_open,
            r_hi_shares: eda.iter().map(|e| e.hi).collect(),
            beta_xor,
            wrap_xor,
            sign_xor,
        })
    }
}

/// XOR-shared comparison outcome.
pub struct XorBits {
    /// XOR share of the ≥ bit (the negated sign of the difference).
    pub negated_sign: Vec<bool>,
}

struct MaskedBits {
    c_open: Vec<RingElem>,
    r_hi_shares: Vec<RingElem>,
    beta_xor: Vec<bool>,
    wrap_xor: Vec<bool>,
    sign_xor: Vec<bool>,
}

/// Dealer material consumed by one truncation of `m` elements.
pub fn trunc_cost(m: usize) -> (usize, usize, usize) {
    // (edabits, bit triples, ring triples)
    (m, m * RING_BITS as usize, 3 * m)
}

/// Dealer material consumed by one arithmetic comparison of `m` elements.
pub fn compare_cost(m: usize) -> (usize, usize, usize) {
    (m, m * RING_BITS as usize, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::dealer::{dealer_gen, MaterialRequest};
    use crate::mpc::channel::in_proc_pair;
    use crate::mpc::share::{reconstruct, reconstruct_ring, share, share_ring};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::thread;

    /// Runs the same closure on both parties over an in-process pair.
    fn run_two<T: Send + 'static>(
        req: &MaterialRequest,
        seed: u64,
        f: impl Fn(GateCtx) -> T + Send + Sync + Clone + 'static,
    ) -> (T, T) {
        let (mut h1, mut h2) = dealer_gen(req, seed);
        let (mut c1, mut c2) = in_proc_pair();
        let g = f.clone();
        let t1 = thread::spawn(move || {
            f(GateCtx { party: Party::P1, material: &mut h1, chan: &mut c1 })
        });
        let t2 = thread::spawn(move || {
            g(GateCtx { party: Party::P2, material: &mut h2, chan: &mut c2 })
        });
        (t1.join().unwrap(), t2.join().unwrap())
    }

    fn req_for(muls: usize, truncs: usize, compares: usize) -> MaterialRequest {
        let (te, tb, tr) = trunc_cost(truncs);
        let (ce, cb, cr) = compare_cost(compares);
        MaterialRequest {
            ring_triples: muls + tr + cr,
            bit_triples: tb + cb,
            edabits: te + ce,
            mat_shapes: vec![],
            frac_bits: 16,
        }
    }

    #[test]
    fn beaver_mul_small_integers() {
        // f = 0: plain ring product
        let (s1, s2) = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            share_ring(&[RingElem(3)], 0, &mut rng)
        };
        let (r1, r2) = run_two(&req_for(1, 0, 0), 1, move |mut ctx| {
            let x = if ctx.party == Party::P1 { s1.clone() } else { s2.clone() };
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let (y1, y2) = share_ring(&[RingElem(4)], 0, &mut rng);
            let y = if ctx.party == Party::P1 { y1 } else { y2 };
            ctx.beaver_mul(&x, &y).unwrap()
        });
        assert_eq!(reconstruct_ring(&r1, &r2).unwrap(), vec![RingElem(12)]);
    }

    #[test]
    fn beaver_mul_fixed_point_exact() {
        // 1.5 * 2.0 at f = 16 is exactly representable
        let (r1, r2) = run_two(&req_for(1, 1, 0), 2, |mut ctx| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let (x1, x2) = share(&[1.5], 16, &mut rng).unwrap();
            let (y1, y2) = share(&[2.0], 16, &mut rng).unwrap();
            let (x, y) = if ctx.party == Party::P1 { (x1, y1) } else { (x2, y2) };
            ctx.beaver_mul(&x, &y).unwrap()
        });
        assert_eq!(reconstruct(&r1, &r2).unwrap(), vec![3.0]);
    }

    #[test]
    fn mpc_multiplication_matches_fixed_point_oracle_exactly() {
        // 10^4 random pairs; the plaintext oracle uses the identical ring
        // product + arithmetic-shift rule, and must agree bit for bit
        let n = 10_000usize;
        let f = 16u32;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<RingElem> =
            (0..n).map(|_| RingElem::from_signed(rng.gen_range(-5_000_000..5_000_000))).collect();
        let ys: Vec<RingElem> =
            (0..n).map(|_| RingElem::from_signed(rng.gen_range(-5_000_000..5_000_000))).collect();
        let expected: Vec<RingElem> = xs.iter().zip(&ys).map(|(&x, &y)| (x * y).asr(f)).collect();

        let xs2 = xs.clone();
        let ys2 = ys.clone();
        let (r1, r2) = run_two(&req_for(n, n, 0), 3, move |mut ctx| {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let (x1, x2) = share_ring(&xs2, f, &mut rng);
            let (y1, y2) = share_ring(&ys2, f, &mut rng);
            let (x, y) = if ctx.party == Party::P1 { (x1, y1) } else { (x2, y2) };
            ctx.beaver_mul(&x, &y).unwrap()
        });
        let got = reconstruct_ring(&r1, &r2).unwrap();
        assert_eq!(got, expected, "secure multiply deviated from the oracle");
    }

    #[test]
    fn truncation_is_exact_on_extremes() {
        let f = 16u32;
        let values: Vec<RingElem> = vec![
            RingElem::from_signed(-1),
            RingElem::from_signed(1),
            RingElem::from_signed(-65536),
            RingElem::from_signed(65535),
            RingElem::from_signed(i64::MIN / 4),
            RingElem::from_signed(i64::MAX / 4),
            RingElem::ZERO,
        ];
        let expected: Vec<RingElem> = values.iter().map(|v| v.asr(f)).collect();
        let vals = values.clone();
        let (r1, r2) = run_two(&req_for(0, vals.len(), 0), 4, move |mut ctx| {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let (v1, v2) = share_ring(&vals, 2 * f, &mut rng);
            let v = if ctx.party == Party::P1 { v1 } else { v2 };
            ctx.trunc_by(&v, f).unwrap()
        });
        assert_eq!(reconstruct_ring(&r1, &r2).unwrap(), expected);
    }

    #[test]
    fn comparison_agrees_with_plaintext_exhaustively() {
        // a full 2^10 window of signed pairs around zero
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for x in -16i64..16 {
            for y in -16i64..16 {
                xs.push(RingElem::from_signed(x));
                ys.push(RingElem::from_signed(y));
            }
        }
        let expected: Vec<RingElem> = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                if x.to_signed() >= y.to_signed() {
                    RingElem::ONE
                } else {
                    RingElem::ZERO
                }
            })
            .collect();
        let m = xs.len();
        let (xs2, ys2) = (xs.clone(), ys.clone());
        let (r1, r2) = run_two(&req_for(0, 0, m), 5, move |mut ctx| {
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let (x1, x2) = share_ring(&xs2, 0, &mut rng);
            let (y1, y2) = share_ring(&ys2, 0, &mut rng);
            let (x, y) = if ctx.party == Party::P1 { (x1, y1) } else { (x2, y2) };
            ctx.compare_ge(&x, &y).unwrap()
        });
        let got = reconstruct_ring(&r1, &r2).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn comparison_specific_values() {
        let cases = [(5i64, 3i64, 1u64), (3, 5, 0), (4, 4, 1)];
        for (x, y, want) in cases {
            let (r1, r2) = run_two(&req_for(0, 0, 1), 6, move |mut ctx| {
                let mut rng = ChaCha8Rng::seed_from_u64(15);
                let (x1, x2) = share_ring(&[RingElem::from_signed(x)], 0, &mut rng);
                let (y1, y2) = share_ring(&[RingElem::from_signed(y)], 0, &mut rng);
                let (xs, ys) = if ctx.party == Party::P1 { (x1, y1) } else { (x2, y2) };
                ctx.compare_ge(&xs, &ys).unwrap()
            });
            assert_eq!(
                reconstruct_ring(&r1, &r2).unwrap(),
                vec![RingElem(want)],
                "{x} >= {y}"
            );
        }
    }

    #[test]
    fn matmul_reconstructs_ring_product() {
        let f = 16u32;
        // X (2x3) · W (3x1) with values exactly representable at f = 16
        let x_plain = [1.0, 2.0, -0.5, 0.25, -1.0, 4.0];
        let w_plain = [0.5, -1.5, 2.0];
        let expect = [
            1.0 * 0.5 + 2.0 * -1.5 + -0.5 * 2.0,
            0.25 * 0.5 + -1.0 * -1.5 + 4.0 * 2.0,
        ];
        let req = MaterialRequest {
            ring_triples: 3 * 2,
            bit_triples: 2 * RING_BITS as usize,
            edabits: 2,
            mat_shapes: vec![(2, 3, 1)],
            frac_bits: f,
        };
        let (r1, r2) = run_two(&req, 7, move |mut ctx| {
            let mut rng = ChaCha8Rng::seed_from_u64(16);
            let (x1, x2) = share(&x_plain, f, &mut rng).unwrap();
            let (w1, w2) = share(&w_plain, f, &mut rng).unwrap();
            let (xs, ws) = if ctx.party == Party::P1 { (x1, w1) } else { (x2, w2) };
            let xm = SharedMat::from_vec(xs, 2, 3).unwrap();
            let wm = SharedMat::from_vec(ws, 3, 1).unwrap();
            ctx.matmul(&xm, &wm).unwrap().to_vec()
        });
        assert_eq!(reconstruct(&r1, &r2).unwrap(), expect);
    }

    #[test]
    fn fresh_triples_are_required() {
        // a request sized for zero multiplications fails cleanly
        let (r1, _) = run_two(&req_for(0, 0, 0), 8, |mut ctx| {
            let x = SharedVector::zeros(ctx.party, 1, 0);
            ctx.mul_no_trunc(&x, &x).map(|_| ()).unwrap_err()
        });
        assert!(matches!(r1, MpcError::DealerExhausted(_)));
    }
}
