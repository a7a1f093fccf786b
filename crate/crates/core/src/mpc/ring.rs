//! Arithmetic in the power-of-two ring Z_{2^64} and the fixed-point encoding
//! layered on top of it. Two's-complement reinterpretation gives the signed
//! view; the arithmetic-shift truncation here is the single rounding rule the
//! whole secure pipeline and its plaintext reference share.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::MpcError;

/// Ring width in bits.
pub const RING_BITS: u32 = 64;

/// Default fractional bits of the fixed-point encoding.
pub const DEFAULT_FRAC_BITS: u32 = 16;

/// An element of Z_{2^64}; all arithmetic wraps.
#[derive(Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct RingElem(pub u64);

impl RingElem {
    pub const ZERO: RingElem = RingElem(0);
    pub const ONE: RingElem = RingElem(1);

    pub fn from_signed(v: i64) -> Self {
        RingElem(v as u64)
    }

    /// Two's-complement reinterpretation.
    pub fn to_signed(self) -> i64 {
        self.0 as i64
    }

    pub fn bit(self, i: u32) -> bool {
        (self.0 >> i) & 1 == 1
    }

    /// Logical shift right.
    pub fn lsr(self, f: u32) -> Self {
        RingElem(self.0 >> f)
    }

    /// Arithmetic shift right: floor division by 2^f on the signed view.
    pub fn asr(self, f: u32) -> Self {
        RingElem(((self.0 as i64) >> f) as u64)
    }
}

impl Add for RingElem {
    type Output = RingElem;
    fn add(self, rhs: Self) -> Self {
        RingElem(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingElem {
    type Output = RingElem;
    fn sub(self, rhs: Self) -> Self {
        RingElem(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingElem {
    type Output = RingElem;
    fn mul(self, rhs: Self) -> Self {
        RingElem(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElem {
    type Output = RingElem;
    fn neg(self) -> Self {
        RingElem(self.0.wrapping_neg())
    }
}

impl fmt::Debug for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R({})", self.0)
    }
}

/// Fixed-point encoding: `encode(x) = round(x * 2^f)` mapped into the ring
/// through the signed view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FxEncoding {
    pub frac_bits: u32,
}

impl FxEncoding {
    pub fn new(frac_bits: u32) -> Self {
        assert!(frac_bits < RING_BITS - 2);
        Self { frac_bits }
    }

    pub fn scale(self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Values must stay below the 2^(k-f-2) headroom bound so sums and
    /// products of encodings cannot cross the sign boundary.
    pub fn encode(self, x: f64) -> Result<RingElem, MpcError> {
        if !x.is_finite() {
            return Err(MpcError::EncodeRange(x));
        }
        let scaled = (x * self.scale()).round();
        let limit = 2f64.powi((RING_BITS - self.frac_bits - 2) as i32) * self.scale();
        if scaled.abs() >= limit {
            return Err(MpcError::EncodeRange(x));
        }
        Ok(RingElem::from_signed(scaled as i64))
    }

    pub fn decode(self, e: RingElem) -> f64 {
        e.to_signed() as f64 / self.scale()
    }

    pub fn encode_all(self, xs: &[f64]) -> Result<Vec<RingElem>, MpcError> {
        xs.iter().map(|&x| self.encode(x)).collect()
    }

    pub fn decode_all(self, es: &[RingElem]) -> Vec<f64> {
        es.iter().map(|&e| self.decode(e)).collect()
    }
}

/// Wrapping matrix product of row-major ring matrices: (n×k) · (k×m).
pub fn ring_matmul(
    a: &[RingElem],
    b: &[RingElem],
    n: usize,
    k: usize,
    m: usize,
) -> Vec<RingElem> {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    let mut out = vec![RingElem::ZERO; n * m];
    for i in 0..n {
        for l in 0..k {
            let av = a[i * k + l];
            if av == RingElem::ZERO {
                continue;
            }
            for j in 0..m {
                out[i * m + j] = out[i * m + j] + av * b[l * m + j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_arithmetic() {
        let a = RingElem(u64::MAX);
        assert_eq!(a + RingElem::ONE, RingElem::ZERO);
        assert_eq!(RingElem::ZERO - RingElem::ONE, RingElem(u64::MAX));
        assert_eq!(RingElem::from_signed(-1), RingElem(u64::MAX));
        assert_eq!(RingElem(u64::MAX).to_signed(), -1);
    }

    #[test]
    fn asr_is_signed_floor_division() {
        let f = 4;
        for v in [-37i64, -16, -1, 0, 1, 15, 16, 37] {
            let shifted = RingElem::from_signed(v).asr(f).to_signed();
            assert_eq!(shifted, v.div_euclid(16), "v = {v}");
        }
    }

    #[test]
    fn encode_decode_stays_within_half_ulp() {
        let fx = FxEncoding::new(16);
        for x in [-1000.25, -3.7, -0.00001, 0.0, 0.5, 1.5, 123.456] {
            let e = fx.encode(x).unwrap();
            assert!((fx.decode(e) - x).abs() <= 0.5 / fx.scale());
        }
        assert_eq!(fx.decode(fx.encode(1.5).unwrap()), 1.5);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let fx = FxEncoding::new(16);
        assert!(fx.encode(f64::NAN).is_err());
        assert!(fx.encode(2f64.powi(47)).is_err());
        assert!(fx.encode(2f64.powi(45)).is_ok());
    }

    #[test]
    fn matmul_matches_naive() {
        let a: Vec<RingElem> = (1..=6).map(RingElem).collect(); // 2x3
        let b: Vec<RingElem> = (1..=3).map(RingElem).collect(); // 3x1
        let c = ring_matmul(&a, &b, 2, 3, 1);
        assert_eq!(c, vec![RingElem(14), RingElem(32)]);
    }
}
