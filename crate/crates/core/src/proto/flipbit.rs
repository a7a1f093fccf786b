//! Direct two-party DistCheck and the output-share flipping attack it
//! admits. Here the prover itself is computing party 1 and the verifier
//! party 2; the verdict bit is delivered as XOR shares, and a malicious
//! prover that sets its share to 1 ⊕ [v]^1 inverts the verdict the verifier
//! reconstructs — with certainty. The outsourced deployment removes the
//! lever entirely: the prover's role ends at input sharing and it never
//! holds an output share.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{plaintext_distcheck, ProtoError};
use crate::mpc::channel::in_proc_pair;
use crate::mpc::dealer::{dealer_gen, MaterialRequest};
use crate::mpc::gates::{compare_cost, GateCtx};
use crate::mpc::ring::RingElem;
use crate::mpc::share::{scale_public, share_ring, Party, SharedVector};
use crate::mpc::MpcError;
use crate::synth::{window_range, LabeledDataset, PropertySpec};

/// Material both parties need for one direct DistCheck.
pub fn direct_material() -> MaterialRequest {
    let (e, b, _) = compare_cost(1);
    MaterialRequest {
        ring_triples: 0,
        bit_triples: 2 * b + 1,
        edabits: 2 * e,
        mat_shapes: vec![],
        frac_bits: 0,
    }
}

/// One party's run of the direct protocol; returns this party's XOR share of
/// the verdict bit.
fn direct_distcheck_party(
    ctx: &mut GateCtx,
    sensitive: &SharedVector,
    spec: &PropertySpec,
    n: usize,
) -> Result<bool, MpcError> {
    let count = sensitive.sum();
    let (lo, hi) = window_range(spec);
    let n = n as u64;

    let lhs_lo = scale_public(&count, *lo.denom() as i64);
    let rhs_lo = SharedVector::public(ctx.party, &[RingElem(*lo.numer() * n)], 0);
    let b_lo = ctx.compare_ge_xor(&lhs_lo, &rhs_lo)?;

    let lhs_hi = SharedVector::public(ctx.party, &[RingElem(*hi.numer() * n)], 0);
    let rhs_hi = scale_public(&count, *hi.denom() as i64);
    let b_hi = ctx.compare_ge_xor(&lhs_hi, &rhs_hi)?;

    let v = ctx.and_xor(&b_lo.negated_sign, &b_hi.negated_sign)?;
    Ok(v[0])
}

/// Outcome of one direct-mode run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectRun {
    /// The true window check on the prover's dataset.
    pub truth: bool,
    /// What the verifier reconstructs from the exchanged output shares.
    pub verifier_sees: bool,
}

/// Runs DistCheck directly between prover (party 1) and verifier (party 2).
/// With `flip` set, the malicious prover replaces its output share
/// [out]^1 = 1 ⊕ [v]^1 before the exchange.
pub fn run_direct(
    ds: &LabeledDataset,
    spec: &PropertySpec,
    dealer_seed: u64,
    share_seed: u64,
    flip: bool,
) -> Result<DirectRun, ProtoError> {
    spec.validate()?;
    let truth = plaintext_distcheck(ds.sensitive_count(), ds.len(), spec);
    let n = ds.len();
    let sens: Vec<RingElem> =
        ds.records.iter().map(|r| RingElem(r.sensitive as u64)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(share_seed);
    let (s1, s2) = share_ring(&sens, 0, &mut rng);

    let (mut h1, mut h2) = dealer_gen(&direct_material(), dealer_seed);
    let (mut c1, mut c2) = in_proc_pair();
    let spec1 = spec.clone();
    let spec2 = spec.clone();

    let prover = std::thread::spawn(move || -> Result<bool, MpcError> {
        let mut ctx = GateCtx { party: Party::P1, material: &mut h1, chan: &mut c1 };
        let v1 = direct_distcheck_party(&mut ctx, &s1, &spec1, n)?;
        // output delivery: the prover sends its (possibly flipped) share
        let out1 = v1 ^ flip;
        ctx.chan.send(crate::mpc::channel::TAG_OUT_VERDICT, &[out1 as u8])?;
        Ok(out1)
    });
    let verifier = std::thread::spawn(move || -> Result<bool, MpcError> {
        let mut ctx = GateCtx { party: Party::P2, material: &mut h2, chan: &mut c2 };
        let v2 = direct_distcheck_party(&mut ctx, &s2, &spec2, n)?;
        let payload =
            crate::mpc::channel::expect(ctx.chan, crate::mpc::channel::TAG_OUT_VERDICT)?;
        if payload.len() != 1 || payload[0] > 1 {
            return Err(MpcError::Protocol("bad verdict share".into()));
        }
        Ok((payload[0] == 1) ^ v2)
    });

    prover.join().map_err(|_| ProtoError::RolePanic)??;
    let verifier_sees = verifier.join().map_err(|_| ProtoError::RolePanic)??;
    Ok(DirectRun { truth, verifier_sees })
}

/// The §-level demonstration record: the same dataset run honestly and with
/// the flipped output share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlipBitRecord {
    pub truth: bool,
    pub honest_verdict: bool,
    pub flipped_verdict: bool,
}

pub fn flipbit_demo(
    ds: &LabeledDataset,
    spec: &PropertySpec,
    seed: u64,
) -> Result<FlipBitRecord, ProtoError> {
    let honest = run_direct(ds, spec, seed, seed.wrapping_add(1), false)?;
    let flipped = run_direct(ds, spec, seed, seed.wrapping_add(1), true)?;
    Ok(FlipBitRecord {
        truth: honest.truth,
        honest_verdict: honest.verifier_sees,
        flipped_verdict: flipped.verifier_sees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_dataset;
    use num::rational::Ratio;

    fn spec_at(p: Ratio<u64>, window: usize) -> PropertySpec {
        let grid: Vec<Ratio<u64>> = (0..=10).map(|k| Ratio::new(k, 10)).collect();
        PropertySpec::new(p, window, grid).unwrap()
    }

    #[test]
    fn honest_direct_mode_is_correct() {
        let spec = spec_at(Ratio::new(2, 5), 0);
        let pass = sample_dataset(Ratio::new(2, 5), 20, 3, 1).unwrap();
        let fail = sample_dataset(Ratio::new(7, 10), 20, 3, 2).unwrap();
        let run = run_direct(&pass, &spec, 3, 4, false).unwrap();
        assert!(run.truth && run.verifier_sees);
        let run = run_direct(&fail, &spec, 3, 4, false).unwrap();
        assert!(!run.truth && !run.verifier_sees);
    }

    #[test]
    fn flip_inverts_the_verdict_both_ways() {
        let spec = spec_at(Ratio::new(2, 5), 0);
        // failing dataset + flip: the verifier sees accept
        let fail = sample_dataset(Ratio::new(7, 10), 20, 3, 2).unwrap();
        let rec = flipbit_demo(&fail, &spec, 5).unwrap();
        assert!(!rec.truth);
        assert!(!rec.honest_verdict);
        assert!(rec.flipped_verdict, "the flip must turn reject into accept");

        // passing dataset + flip: the verifier sees reject
        let pass = sample_dataset(Ratio::new(2, 5), 20, 3, 9).unwrap();
        let rec = flipbit_demo(&pass, &spec, 6).unwrap();
        assert!(rec.truth);
        assert!(rec.honest_verdict);
        assert!(!rec.flipped_verdict);
    }
}
