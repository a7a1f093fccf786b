//! The four protocol roles and their orchestration. Servers are lockstep
//! state machines: input shares must arrive before anything else, unknown or
//! out-of-order frames abort the session, and after the input-sharing phase
//! the prover holds no handle that could influence the outcome.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Phase, PhaseStats, ProtoError, SessionConfig, Transcript};
use crate::fxtrain::{self, FxDataset, FxModel};
use crate::mpc::channel::{
    decode_ring, encode_ring, expect, Channel, TAG_ABORT, TAG_INPUT_DATA, TAG_INPUT_WEIGHTS,
    TAG_OUT_MODEL, TAG_OUT_VERDICT,
};
use crate::mpc::dealer::{dealer_gen, DealerHalf, MaterialRequest};
use crate::mpc::gates::{compare_cost, trunc_cost, GateCtx, SharedMat};
use crate::mpc::ring::RingElem;
use crate::mpc::share::{share_ring, Party, SharedVector};
use crate::mpc::MpcError;
use crate::synth::{window_range, LabeledDataset};

/// Dealer material one server needs for a full session under `cfg`.
pub fn material_request(cfg: &SessionConfig) -> MaterialRequest {
    let mut req = MaterialRequest {
        ring_triples: 0,
        bit_triples: 0,
        edabits: 0,
        mat_shapes: Vec::new(),
        frac_bits: cfg.hp.frac_bits,
    };
    // DistCheck: two scalar comparisons plus the window conjunction
    for _ in 0..2 {
        let (e, b, r) = compare_cost(1);
        req.edabits += e;
        req.bit_triples += b;
        req.ring_triples += r;
    }
    req.ring_triples += 1;

    // training: per batch, two truncated matmuls and two public-constant steps
    let plan = fxtrain::batch_plan(cfg.n, cfg.hp.batch_size, cfg.train_shuffle_seed);
    for _ in 0..cfg.hp.epochs {
        for batch in &plan {
            let b = batch.len();
            req.mat_shapes.push((b, cfg.d, 1));
            for m in [b, cfg.d, cfg.d, 1] {
                let (e, bt, r) = trunc_cost(m);
                req.edabits += e;
                req.bit_triples += bt;
                req.ring_triples += r;
            }
            req.mat_shapes.push((cfg.d, b, 1));
        }
    }
    req
}

/// The prover's entire involvement: encode, share, send, disconnect. The
/// returned unit is deliberate — after this call the prover owns no share of
/// any intermediate or output value.
pub fn prover_share_inputs(
    ds: &LabeledDataset,
    init: &FxModel,
    cfg: &SessionConfig,
    chan_s1: &mut dyn Channel,
    chan_s2: &mut dyn Channel,
    share_seed: u64,
) -> Result<(), ProtoError> {
    if ds.len() != cfg.n || ds.dim() != cfg.d {
        return Err(ProtoError::Violation(format!(
            "dataset shape ({}, {}) does not match session config ({}, {})",
            ds.len(),
            ds.dim(),
            cfg.n,
            cfg.d
        )));
    }
    let data: FxDataset = fxtrain::encode_dataset(ds, cfg.hp.frac_bits)?;
    let mut rng = ChaCha8Rng::seed_from_u64(share_seed);

    let (x1, x2) = share_ring(&data.x, cfg.hp.frac_bits, &mut rng);
    let (y1, y2) = share_ring(&data.y, cfg.hp.frac_bits, &mut rng);
    let (s1, s2) = share_ring(&data.sensitive, 0, &mut rng);
    let (w1, w2) = share_ring(&init.weights, cfg.hp.frac_bits, &mut rng);
    let (b1, b2) = share_ring(&[init.bias], cfg.hp.frac_bits, &mut rng);

    fn send_half(
        chan: &mut dyn Channel,
        x: &SharedVector,
        y: &SharedVector,
        s: &SharedVector,
        w: &SharedVector,
        b: &SharedVector,
    ) -> Result<(), ProtoError> {
        let mut payload = encode_ring(&x.shares);
        payload.extend(encode_ring(&y.shares));
        payload.extend(encode_ring(&s.shares));
        chan.send(TAG_INPUT_DATA, &payload)?;
        let mut wp = encode_ring(&w.shares);
        wp.extend(encode_ring(&b.shares));
        chan.send(TAG_INPUT_WEIGHTS, &wp)?;
        Ok(())
    }
    send_half(chan_s1, &x1, &y1, &s1, &w1, &b1)?;
    send_half(chan_s2, &x2, &y2, &s2, &w2, &b2)?;
    Ok(())
}

/// What one server hands to the verifier, plus its transcript.
#[derive(Debug, Clone)]
pub struct ServerOutcome {
    pub transcript: Transcript,
}

struct ServerInputs {
    x: SharedMat,
    y: SharedVector,
    sensitive: SharedVector,
    w: SharedVector,
    bias: SharedVector,
}

fn parse_inputs(
    party: Party,
    cfg: &SessionConfig,
    data_payload: &[u8],
    weight_payload: &[u8],
) -> Result<ServerInputs, ProtoError> {
    let ring = decode_ring(data_payload)?;
    let want = cfg.n * cfg.d + 2 * cfg.n;
    if ring.len() != want {
        return Err(ProtoError::Violation(format!(
            "input share payload has {} elements, expected {want}",
            ring.len()
        )));
    }
    let f = cfg.hp.frac_bits;
    let (x_part, rest) = ring.split_at(cfg.n * cfg.d);
    let (y_part, s_part) = rest.split_at(cfg.n);
    let wr = decode_ring(weight_payload)?;
    if wr.len() != cfg.d + 1 {
        return Err(ProtoError::Violation(format!(
            "weight share payload has {} elements, expected {}",
            wr.len(),
            cfg.d + 1
        )));
    }
    Ok(ServerInputs {
        x: SharedMat {
            party,
            rows: cfg.n,
            cols: cfg.d,
            data: x_part.to_vec(),
            frac_bits: f,
        },
        y: SharedVector { party, shares: y_part.to_vec(), frac_bits: f },
        sensitive: SharedVector { party, shares: s_part.to_vec(), frac_bits: 0 },
        w: SharedVector { party, shares: wr[..cfg.d].to_vec(), frac_bits: f },
        bias: SharedVector { party, shares: wr[cfg.d..].to_vec(), frac_bits: f },
    })
}

/// DistCheck over the shared sensitive column: count ∈ [lo·n, hi·n] decided
/// with two comparisons on public integer cross-multiplications; the
/// conjunction is one Beaver product of the two bits.
fn distcheck(
    ctx: &mut GateCtx,
    sensitive: &SharedVector,
    cfg: &SessionConfig,
) -> Result<SharedVector, MpcError> {
    let count = sensitive.sum();
    let (lo, hi) = window_range(&cfg.spec);
    let n = cfg.n as u64;

    let lhs_lo = crate::mpc::share::scale_public(&count, *lo.denom() as i64);
    let rhs_lo =
        SharedVector::public(ctx.party, &[RingElem(*lo.numer() * n)], 0);
    let b_lo = ctx.compare_ge(&lhs_lo, &rhs_lo)?;

    let lhs_hi =
        SharedVector::public(ctx.party, &[RingElem(*hi.numer() * n)], 0);
    let rhs_hi = crate::mpc::share::scale_public(&count, *hi.denom() as i64);
    let b_hi = ctx.compare_ge(&lhs_hi, &rhs_hi)?;

    ctx.mul_no_trunc(&b_lo, &b_hi)
}

/// Secure mini-batch training of the linear model; mirrors
/// `fxtrain::train` gate for gate.
fn secure_train(
    ctx: &mut GateCtx,
    inputs: &ServerInputs,
    cfg: &SessionConfig,
) -> Result<(SharedVector, SharedVector), MpcError> {
    let f = cfg.hp.frac_bits;
    let d = cfg.d;
    let plan = fxtrain::batch_plan(cfg.n, cfg.hp.batch_size, cfg.train_shuffle_seed);
    let lr_eff = cfg.hp.learning_rate / cfg.hp.batch_size.max(1) as f64;

    let mut w = inputs.w.clone();
    let mut bias = inputs.bias.clone();
    for _ in 0..cfg.hp.epochs {
        for batch in &plan {
            let b = batch.len();
            let mut xb = Vec::with_capacity(b * d);
            for &i in batch {
                xb.extend_from_slice(&inputs.x.data[i * d..(i + 1) * d]);
            }
            let xb = SharedMat { party: ctx.party, rows: b, cols: d, data: xb, frac_bits: f };
            let wm = SharedMat::from_vec(w.clone(), d, 1)?;

            let p = ctx.matmul(&xb, &wm)?;
            let e: Vec<RingElem> = batch
                .iter()
                .zip(&p.data)
                .map(|(&i, &pi)| pi + bias.shares[0] - inputs.y.shares[i])
                .collect();
            let e = SharedVector { party: ctx.party, shares: e, frac_bits: f };

            let xt = xb.transpose();
            let g = ctx.matmul(&xt, &SharedMat::from_vec(e.clone(), b, 1)?)?;

            let step = ctx.mul_public_fx(&g.to_vec(), lr_eff)?;
            w = crate::mpc::share::sub_shares(&w, &step)?;
            let bias_step = ctx.mul_public_fx(&e.sum(), lr_eff)?;
            bias = crate::mpc::share::sub_shares(&bias, &bias_step)?;
        }
    }
    Ok((w, bias))
}

fn abort_all(chans: &mut [&mut dyn Channel]) {
    for chan in chans {
        let _ = chan.send(TAG_ABORT, &[]);
    }
}

/// Runs one computing server end to end. Any malformed or out-of-order frame
/// aborts the session toward both the peer and the verifier, so a
/// misbehaving prover can only cause rejection.
pub fn run_server(
    party: Party,
    cfg: &SessionConfig,
    mut material: DealerHalf,
    prover_chan: &mut dyn Channel,
    peer_chan: &mut dyn Channel,
    verifier_chan: &mut dyn Channel,
) -> Result<ServerOutcome, ProtoError> {
    let mut transcript = Transcript::default();
    let mut mark = |phase: Phase,
                    start: Instant,
                    sent0: u64,
                    recv0: u64,
                    sent1: u64,
                    recv1: u64,
                    t: &mut Transcript| {
        t.phases.push(PhaseStats {
            phase,
            bytes_sent: sent1 - sent0,
            bytes_received: recv1 - recv0,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
    };

    // input-sharing phase: exactly INPD then INPW from the prover
    let start = Instant::now();
    let (s0, r0) = (prover_chan.bytes_sent(), prover_chan.bytes_received());
    let inputs = (|| -> Result<ServerInputs, ProtoError> {
        let data = expect(prover_chan, TAG_INPUT_DATA)?;
        let weights = expect(prover_chan, TAG_INPUT_WEIGHTS)?;
        parse_inputs(party, cfg, &data, &weights)
    })();
    let inputs = match inputs {
        Ok(v) => v,
        Err(e) => {
            abort_all(&mut [peer_chan, verifier_chan]);
            return Err(e);
        }
    };
    let (s1, r1) = (prover_chan.bytes_sent(), prover_chan.bytes_received());
    mark(Phase::InputSharing, start, s0, r0, s1, r1, &mut transcript);

    // DistCheck with the peer server
    let start = Instant::now();
    let (s0, r0) = (peer_chan.bytes_sent(), peer_chan.bytes_received());
    let verdict = {
        let mut ctx = GateCtx { party, material: &mut material, chan: peer_chan };
        match distcheck(&mut ctx, &inputs.sensitive, cfg) {
            Ok(v) => v,
            Err(e) => {
                abort_all(&mut [peer_chan, verifier_chan]);
                return Err(e.into());
            }
        }
    };
    let (s1, r1) = (peer_chan.bytes_sent(), peer_chan.bytes_received());
    mark(Phase::DistCheck, start, s0, r0, s1, r1, &mut transcript);

    // secure training on the same input shares
    let start = Instant::now();
    let (s0, r0) = (peer_chan.bytes_sent(), peer_chan.bytes_received());
    let (w, bias) = {
        let mut ctx = GateCtx { party, material: &mut material, chan: peer_chan };
        match secure_train(&mut ctx, &inputs, cfg) {
            Ok(v) => v,
            Err(e) => {
                abort_all(&mut [peer_chan, verifier_chan]);
                return Err(e.into());
            }
        }
    };
    let (s1, r1) = (peer_chan.bytes_sent(), peer_chan.bytes_received());
    mark(Phase::Training, start, s0, r0, s1, r1, &mut transcript);

    // hand the output shares to the verifier
    let start = Instant::now();
    let (s0, r0) = (verifier_chan.bytes_sent(), verifier_chan.bytes_received());
    verifier_chan.send(TAG_OUT_VERDICT, &encode_ring(&verdict.shares))?;
    let mut model_payload = encode_ring(&w.shares);
    model_payload.extend(encode_ring(&bias.shares));
    verifier_chan.send(TAG_OUT_MODEL, &model_payload)?;
    let (s1, r1) = (verifier_chan.bytes_sent(), verifier_chan.bytes_received());
    mark(Phase::Output, start, s0, r0, s1, r1, &mut transcript);

    Ok(ServerOutcome { transcript })
}

/// What the verifier reconstructs, with its own cost accounting.
#[derive(Debug, Clone)]
pub struct AttestationOutcome {
    pub verdict: bool,
    pub model: FxModel,
    pub verifier_millis: f64,
    pub verifier_bytes: u64,
}

pub fn run_verifier(
    cfg: &SessionConfig,
    chan_s1: &mut dyn Channel,
    chan_s2: &mut dyn Channel,
) -> Result<AttestationOutcome, ProtoError> {
    let start = Instant::now();
    let v1 = decode_ring(&expect(chan_s1, TAG_OUT_VERDICT)?)?;
    let v2 = decode_ring(&expect(chan_s2, TAG_OUT_VERDICT)?)?;
    if v1.len() != 1 || v2.len() != 1 {
        return Err(ProtoError::Violation("verdict share must be a single element".into()));
    }
    let verdict = v1[0] + v2[0];
    if verdict != RingElem::ZERO && verdict != RingElem::ONE {
        return Err(ProtoError::Violation(format!(
            "verdict reconstructed to {verdict:?}, expected a bit"
        )));
    }

    let m1 = decode_ring(&expect(chan_s1, TAG_OUT_MODEL)?)?;
    let m2 = decode_ring(&expect(chan_s2, TAG_OUT_MODEL)?)?;
    if m1.len() != cfg.d + 1 || m2.len() != cfg.d + 1 {
        return Err(ProtoError::Violation("model share has wrong length".into()));
    }
    let combined: Vec<RingElem> = m1.iter().zip(&m2).map(|(&a, &b)| a + b).collect();
    let model = FxModel {
        weights: combined[..cfg.d].to_vec(),
        bias: combined[cfg.d],
        frac_bits: cfg.hp.frac_bits,
    };
    Ok(AttestationOutcome {
        verdict: verdict == RingElem::ONE,
        model,
        verifier_millis: start.elapsed().as_secs_f64() * 1e3,
        verifier_bytes: chan_s1.bytes_received() + chan_s2.bytes_received(),
    })
}

/// Result of a full in-process session.
#[derive(Debug, Clone)]
pub struct OutsourcedRun {
    pub outcome: AttestationOutcome,
    pub s1_transcript: Transcript,
    pub s2_transcript: Transcript,
}

/// Runs prover, both servers, and verifier over in-process channels; the
/// servers run concurrently on their own threads.
pub fn run_outsourced_in_proc(
    ds: &LabeledDataset,
    init: &FxModel,
    cfg: &SessionConfig,
    share_seed: u64,
) -> Result<OutsourcedRun, ProtoError> {
    use crate::mpc::channel::in_proc_pair;
    let (mut p_to_s1, mut s1_from_p) = in_proc_pair();
    let (mut p_to_s2, mut s2_from_p) = in_proc_pair();
    let (mut s1_peer, mut s2_peer) = in_proc_pair();
    let (mut s1_to_v, mut v_from_s1) = in_proc_pair();
    let (mut s2_to_v, mut v_from_s2) = in_proc_pair();

    // the prover completes its entire role before the servers start
    prover_share_inputs(ds, init, cfg, &mut p_to_s1, &mut p_to_s2, share_seed)?;
    drop(p_to_s1);
    drop(p_to_s2);

    let req = material_request(cfg);
    let (h1, h2) = dealer_gen(&req, cfg.dealer_seed);

    let cfg1 = cfg.clone();
    let t1 = std::thread::spawn(move || {
        run_server(Party::P1, &cfg1, h1, &mut s1_from_p, &mut s1_peer, &mut s1_to_v)
    });
    let cfg2 = cfg.clone();
    let t2 = std::thread::spawn(move || {
        run_server(Party::P2, &cfg2, h2, &mut s2_from_p, &mut s2_peer, &mut s2_to_v)
    });

    let outcome = run_verifier(cfg, &mut v_from_s1, &mut v_from_s2);
    let o1 = t1.join().map_err(|_| ProtoError::RolePanic)??;
    let o2 = t2.join().map_err(|_| ProtoError::RolePanic)??;
    Ok(OutsourcedRun {
        outcome: outcome?,
        s1_transcript: o1.transcript,
        s2_transcript: o2.transcript,
    })
}
