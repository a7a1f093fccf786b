//! Two-party additive secret sharing: x = x1 + x2 mod 2^64, either share
//! alone uniformly random. Linear operations are local; anything multiplicative
//! lives in [`super::gates`].

use rand::RngCore;

use super::ring::{FxEncoding, RingElem};
use super::MpcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    P1,
    P2,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::P1 => Party::P2,
            Party::P2 => Party::P1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Party::P1 => 0,
            Party::P2 => 1,
        }
    }
}

/// One party's share of a secret vector, tagged with its fixed-point scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedVector {
    pub party: Party,
    pub shares: Vec<RingElem>,
    pub frac_bits: u32,
}

impl SharedVector {
    pub fn zeros(party: Party, len: usize, frac_bits: u32) -> Self {
        Self { party, shares: vec![RingElem::ZERO; len], frac_bits }
    }

    /// A sharing of a public vector: party 1 holds the values, party 2 zeros.
    pub fn public(party: Party, values: &[RingElem], frac_bits: u32) -> Self {
        let shares = match party {
            Party::P1 => values.to_vec(),
            Party::P2 => vec![RingElem::ZERO; values.len()],
        };
        Self { party, shares, frac_bits }
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    /// Local sum of all coordinates, as a length-one share.
    pub fn sum(&self) -> SharedVector {
        let total = self.shares.iter().fold(RingElem::ZERO, |acc, &v| acc + v);
        SharedVector { party: self.party, shares: vec![total], frac_bits: self.frac_bits }
    }
}

/// Splits a value additively under the given modulus mask (`u64::MAX` for the
/// full ring): the first share is uniform, the second the wrapped difference.
pub fn split_masked(value: u64, mask: u64, rng: &mut dyn RngCore) -> (u64, u64) {
    let s1 = rng.next_u64() & mask;
    let s2 = value.wrapping_sub(s1) & mask;
    (s1, s2)
}

/// Shares pre-encoded ring values.
pub fn share_ring(
    values: &[RingElem],
    frac_bits: u32,
    rng: &mut dyn RngCore,
) -> (SharedVector, SharedVector) {
    let mut s1 = Vec::with_capacity(values.len());
    let mut s2 = Vec::with_capacity(values.len());
    for v in values {
        let (a, b) = split_masked(v.0, u64::MAX, rng);
        s1.push(RingElem(a));
        s2.push(RingElem(b));
    }
    (
        SharedVector { party: Party::P1, shares: s1, frac_bits },
        SharedVector { party: Party::P2, shares: s2, frac_bits },
    )
}

/// Encodes then shares a plaintext vector.
pub fn share(
    values: &[f64],
    frac_bits: u32,
    rng: &mut dyn RngCore,
) -> Result<(SharedVector, SharedVector), MpcError> {
    let fx = FxEncoding::new(frac_bits);
    let encoded = fx.encode_all(values)?;
    Ok(share_ring(&encoded, frac_bits, rng))
}

fn check_pair(s1: &SharedVector, s2: &SharedVector) -> Result<(), MpcError> {
    if s1.party != Party::P1 || s2.party != Party::P2 {
        return Err(MpcError::PartyMismatch);
    }
    if s1.len() != s2.len() {
        return Err(MpcError::ShapeMismatch { got: s2.len(), want: s1.len() });
    }
    if s1.frac_bits != s2.frac_bits {
        return Err(MpcError::FracMismatch { a: s1.frac_bits, b: s2.frac_bits });
    }
    Ok(())
}

pub fn reconstruct_ring(
    s1: &SharedVector,
    s2: &SharedVector,
) -> Result<Vec<RingElem>, MpcError> {
    check_pair(s1, s2)?;
    Ok(s1.shares.iter().zip(&s2.shares).map(|(&a, &b)| a + b).collect())
}

pub fn reconstruct(s1: &SharedVector, s2: &SharedVector) -> Result<Vec<f64>, MpcError> {
    let ring = reconstruct_ring(s1, s2)?;
    Ok(FxEncoding::new(s1.frac_bits).decode_all(&ring))
}

fn check_aligned(a: &SharedVector, b: &SharedVector) -> Result<(), MpcError> {
    if a.party != b.party {
        return Err(MpcError::PartyMismatch);
    }
    if a.len() != b.len() {
        return Err(MpcError::ShapeMismatch { got: b.len(), want: a.len() });
    }
    if a.frac_bits != b.frac_bits {
        return Err(MpcError::FracMismatch { a: a.frac_bits, b: b.frac_bits });
    }
    Ok(())
}

/// Local coordinate-wise addition of two sharings held by the same party.
pub fn add_shares(a: &SharedVector, b: &SharedVector) -> Result<SharedVector, MpcError> {
    check_aligned(a, b)?;
    Ok(SharedVector {
        party: a.party,
        shares: a.shares.iter().zip(&b.shares).map(|(&x, &y)| x + y).collect(),
        frac_bits: a.frac_bits,
    })
}

pub fn sub_shares(a: &SharedVector, b: &SharedVector) -> Result<SharedVector, MpcError> {
    check_aligned(a, b)?;
    Ok(SharedVector {
        party: a.party,
        shares: a.shares.iter().zip(&b.shares).map(|(&x, &y)| x - y).collect(),
        frac_bits: a.frac_bits,
    })
}

/// Adds a public constant vector; only party 1 applies it.
pub fn add_public(s: &SharedVector, consts: &[f64]) -> Result<SharedVector, MpcError> {
    if consts.len() != s.len() {
        return Err(MpcError::ShapeMismatch { got: consts.len(), want: s.len() });
    }
    let fx = FxEncoding::new(s.frac_bits);
    let encoded = fx.encode_all(consts)?;
    let shares = match s.party {
        Party::P1 => s.shares.iter().zip(&encoded).map(|(&x, &c)| x + c).collect(),
        Party::P2 => s.shares.clone(),
    };
    Ok(SharedVector { party: s.party, shares, frac_bits: s.frac_bits })
}

/// Multiplies by a public integer; local, scale-preserving.
pub fn scale_public(s: &SharedVector, k: i64) -> SharedVector {
    let k = RingElem::from_signed(k);
    SharedVector {
        party: s.party,
        shares: s.shares.iter().map(|&x| x * k).collect(),
        frac_bits: s.frac_bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sixteen_bit_share_algebra() {
        // Q = 2^16, encoded x = 5, share_1 = 65534 -> share_2 = 7
        let mask = 0xFFFFu64;
        let share1 = 65534u64;
        let share2 = 5u64.wrapping_sub(share1) & mask;
        assert_eq!(share2, 7);
        assert_eq!((share1 + share2) & mask, 5);
    }

    #[test]
    fn round_trip_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fx = FxEncoding::new(16);
        for _ in 0..1000 {
            let values: Vec<f64> = (0..8)
                .map(|_| (rng.next_u64() % 2_000_000) as f64 / 1000.0 - 1000.0)
                .collect();
            let (s1, s2) = share(&values, 16, &mut rng).unwrap();
            let back = reconstruct(&s1, &s2).unwrap();
            for (v, b) in values.iter().zip(&back) {
                assert!((v - b).abs() <= 0.5 / fx.scale());
            }
        }
    }

    #[test]
    fn specific_reconstruction_values() {
        // shares of 1.5 at f = 8: encoded 384
        let fx = FxEncoding::new(8);
        assert_eq!(fx.encode(1.5).unwrap(), RingElem(384));
        let s1 = SharedVector { party: Party::P1, shares: vec![RingElem(1000)], frac_bits: 8 };
        let s2 = SharedVector {
            party: Party::P2,
            shares: vec![RingElem(384u64.wrapping_sub(1000))],
            frac_bits: 8,
        };
        assert_eq!(reconstruct(&s1, &s2).unwrap(), vec![1.5]);

        // s2 = -s1 reconstructs to zero
        let s2z = SharedVector {
            party: Party::P2,
            shares: vec![-RingElem(1000)],
            frac_bits: 8,
        };
        assert_eq!(reconstruct(&s1, &s2z).unwrap(), vec![0.0]);
    }

    #[test]
    fn linear_ops_commute_with_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = vec![1.25, -3.5, 0.0, 42.0];
        let y = vec![0.5, 2.0, -1.0, -42.0];
        let (x1, x2) = share(&x, 16, &mut rng).unwrap();
        let (y1, y2) = share(&y, 16, &mut rng).unwrap();

        let sum1 = add_shares(&x1, &y1).unwrap();
        let sum2 = add_shares(&x2, &y2).unwrap();
        assert_eq!(reconstruct(&sum1, &sum2).unwrap(), vec![1.75, -1.5, -1.0, 0.0]);

        // add_public applied by exactly one party
        let b1 = add_public(&x1, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let b2 = add_public(&x2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(reconstruct(&b1, &b2).unwrap(), vec![2.25, -2.5, 1.0, 43.0]);

        // applied by both parties it is off by exactly the constant
        let fx = FxEncoding::new(16);
        let mut both = x2.clone();
        for s in &mut both.shares {
            *s = *s + fx.encode(1.0).unwrap();
        }
        let wrong = reconstruct(&b1, &both).unwrap();
        assert_eq!(wrong, vec![3.25, -1.5, 2.0, 44.0]);

        // integer scaling; by one is the identity
        let k1 = scale_public(&x1, 3);
        let k2 = scale_public(&x2, 3);
        assert_eq!(reconstruct(&k1, &k2).unwrap(), vec![3.75, -10.5, 0.0, 126.0]);
        assert_eq!(scale_public(&x1, 1), x1);
    }

    #[test]
    fn mismatches_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x1, x2) = share(&[1.0, 2.0], 16, &mut rng).unwrap();
        let (y1, _) = share(&[1.0], 16, &mut rng).unwrap();
        let (z1, _) = share(&[1.0, 2.0], 8, &mut rng).unwrap();
        assert!(add_shares(&x1, &y1).is_err());
        assert!(add_shares(&x1, &z1).is_err());
        assert!(reconstruct(&x2, &x2).is_err());
        assert!(reconstruct(&x1, &x1).is_err());
    }

    #[test]
    fn share_one_is_uniform_chi_square() {
        // 10^5 first shares of a fixed secret, binned by top byte; the
        // chi-square statistic must stay below the 0.001 critical value
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut bins = [0u64; 256];
        let secret = [5.0f64];
        for _ in 0..100_000 {
            let (s1, _) = share(&secret, 16, &mut rng).unwrap();
            bins[(s1.shares[0].0 >> 56) as usize] += 1;
        }
        let expected = 100_000.0 / 256.0;
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let crit = ChiSquared::new(255.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "chi2 {chi2} exceeds critical {crit}");

        // the zero vector's first share is just as random-looking
        let mut bins = [0u64; 256];
        for _ in 0..100_000 {
            let (s1, _) = share(&[0.0], 16, &mut rng).unwrap();
            bins[(s1.shares[0].0 >> 56) as usize] += 1;
        }
        let chi2: f64 = bins
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < crit, "zero-secret chi2 {chi2} exceeds critical {crit}");
    }
}
