//! Hybrid attestation: inference first, cryptography where it matters.
//!
//! With a fixed FAR, rejected provers fall back to a cryptographic session,
//! which drives the false-reject rate of honest provers to zero at an
//! expected cost of (N_rej / N) · ω_crpt. With a fixed FRR, rejections are
//! final and the verifier spot-checks a random sample of the accepted
//! provers; the number of false accepts the sample catches follows a
//! hypergeometric law, which prices the FAR/cost trade-off curve.

use std::io::Write;

use num::bigint::BigUint;
use num::traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attest::{AttClassifier, AttestError};
use crate::fxtrain::{self, FxHp};
use crate::model::{derive_seed, FirstLayerFeature};
use crate::proto::session::{material_request, run_outsourced_in_proc, OutsourcedRun};
use crate::proto::{Phase, ProtoError, SessionConfig};
use crate::synth::{compute_property, LabeledDataset, PropertySpec};

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("plan bounds violated: {0}")]
    Bounds(String),
    #[error(transparent)]
    Attest(#[from] AttestError),
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error("crypto session failed: {0}")]
    Session(String),
}

/// Cost of one inference-based and one cryptographic attestation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub omega_inf_secs: f64,
    pub omega_inf_bytes: u64,
    pub omega_crpt_comp_secs: f64,
    pub omega_crpt_comm_bytes: u64,
    pub source: CostSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostSource {
    Measured,
    Configured,
}

/// Exact binomial coefficient; zero when k exceeds n.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

fn pmf_numerator(z: u64, n_a: u64, n_spchk: u64, t: u64) -> BigUint {
    if t > n_spchk || n_spchk - t > n_a - z {
        return BigUint::zero();
    }
    binomial(z, t) * binomial(n_a - z, n_spchk - t)
}

fn big_ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let shift = den.bits().saturating_sub(53);
    let n = (num >> shift).to_f64().unwrap_or(f64::INFINITY);
    let d = (den >> shift).to_f64().unwrap_or(f64::INFINITY);
    n / d
}

fn check_plan(z: u64, n_a: u64, n_spchk: u64) -> Result<(), HybridError> {
    if z > n_a {
        return Err(HybridError::Bounds(format!("z = {z} exceeds N_a = {n_a}")));
    }
    if n_spchk > n_a {
        return Err(HybridError::Bounds(format!(
            "N_spchk = {n_spchk} exceeds N_a = {n_a}"
        )));
    }
    Ok(())
}

/// Probability of catching exactly `t` of the `z` false accepts when
/// sampling `n_spchk` of `n_a` accepted provers without replacement,
/// evaluated in exact big-integer arithmetic.
pub fn hypergeom_pmf(z: u64, n_a: u64, n_spchk: u64, t: u64) -> Result<f64, HybridError> {
    check_plan(z, n_a, n_spchk)?;
    if t > z {
        return Err(HybridError::Bounds(format!("t = {t} exceeds z = {z}")));
    }
    let num = pmf_numerator(z, n_a, n_spchk, t);
    let den = binomial(n_a, n_spchk);
    Ok(big_ratio_to_f64(&num, &den))
}

/// The most likely number of caught false accepts (ties toward the larger
/// count, compared exactly) and the resulting effective residue z − t*.
pub fn effective_fa(z: u64, n_a: u64, n_spchk: u64) -> Result<(u64, u64), HybridError> {
    check_plan(z, n_a, n_spchk)?;
    let mut t_star = 0u64;
    let mut best = pmf_numerator(z, n_a, n_spchk, 0);
    for t in 1..=z {
        let p = pmf_numerator(z, n_a, n_spchk, t);
        if p >= best {
            best = p;
            t_star = t;
        }
    }
    Ok((t_star, z - t_star))
}

/// One prover under attestation: the first-layer feature its model exposes
/// and the dataset it would submit to a cryptographic session.
#[derive(Debug, Clone)]
pub struct ProverCase {
    pub id: String,
    pub feature: FirstLayerFeature,
    pub dataset: LabeledDataset,
}

impl ProverCase {
    /// Ground truth of the window check for this prover's dataset.
    pub fn in_window(&self, spec: &PropertySpec) -> bool {
        compute_property(&self.dataset).map(|p| spec.in_window(p)).unwrap_or(false)
    }
}

#[derive(Debug, Clone)]
pub struct CryptoVerdict {
    pub accept: bool,
    pub comp_seconds: f64,
    pub comm_bytes: u64,
}

/// A handle on cryptographic attestation for one prover case.
pub trait CryptoAttestor {
    fn attest(&mut self, case: &ProverCase) -> Result<CryptoVerdict, HybridError>;
}

impl<F> CryptoAttestor for F
where
    F: FnMut(&ProverCase) -> Result<CryptoVerdict, HybridError>,
{
    fn attest(&mut self, case: &ProverCase) -> Result<CryptoVerdict, HybridError> {
        self(case)
    }
}

/// Total bytes on the wire of one outsourced session, each link counted once.
pub fn session_comm_bytes(run: &OutsourcedRun) -> u64 {
    let phase_bytes = |t: &crate::proto::Transcript, p: Phase, recv_only: bool| -> u64 {
        t.phase(p)
            .map(|s| if recv_only { s.bytes_received } else { s.bytes_sent + s.bytes_received })
            .unwrap_or(0)
    };
    // prover -> servers
    phase_bytes(&run.s1_transcript, Phase::InputSharing, true)
        + phase_bytes(&run.s2_transcript, Phase::InputSharing, true)
        // the server-to-server link, counted from S1's side
        + phase_bytes(&run.s1_transcript, Phase::DistCheck, false)
        + phase_bytes(&run.s1_transcript, Phase::Training, false)
        // servers -> verifier
        + run.s1_transcript.phase(Phase::Output).map(|s| s.bytes_sent).unwrap_or(0)
        + run.s2_transcript.phase(Phase::Output).map(|s| s.bytes_sent).unwrap_or(0)
}

/// Cryptographic attestation by real in-process outsourced sessions with
/// per-case derived seeds.
pub struct SessionAttestor {
    pub spec: PropertySpec,
    pub hp: FxHp,
    pub train_shuffle_seed: u64,
    pub seed_base: u64,
    counter: u64,
    pub last_run: Option<OutsourcedRun>,
}

impl SessionAttestor {
    pub fn new(spec: PropertySpec, hp: FxHp, seed_base: u64) -> Self {
        Self { spec, hp, train_shuffle_seed: 0, seed_base, counter: 0, last_run: None }
    }
}

impl CryptoAttestor for SessionAttestor {
    fn attest(&mut self, case: &ProverCase) -> Result<CryptoVerdict, HybridError> {
        self.counter += 1;
        let cfg = SessionConfig {
            session_id: self.counter,
            n: case.dataset.len(),
            d: case.dataset.dim(),
            spec: self.spec.clone(),
            hp: self.hp,
            train_shuffle_seed: self.train_shuffle_seed,
            dealer_seed: derive_seed(self.seed_base, self.counter, 1),
        };
        let init = fxtrain::init_model(
            cfg.d,
            self.hp.frac_bits,
            derive_seed(self.seed_base, self.counter, 2),
        );
        let share_seed = derive_seed(self.seed_base, self.counter, 3);
        let started = std::time::Instant::now();
        let run = run_outsourced_in_proc(&case.dataset, &init, &cfg, share_seed)?;
        let verdict = CryptoVerdict {
            accept: run.outcome.verdict,
            comp_seconds: started.elapsed().as_secs_f64(),
            comm_bytes: session_comm_bytes(&run),
        };
        self.last_run = Some(run);
        Ok(verdict)
    }
}

/// Touches the material request so callers can size dealer files; see
/// [`material_request`].
pub fn dealer_request_for(cfg: &SessionConfig) -> crate::mpc::dealer::MaterialRequest {
    material_request(cfg)
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub id: String,
    pub truth_in_window: bool,
    pub inference_accept: bool,
    pub crypto_accept: Option<bool>,
    pub final_accept: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FixedFarReport {
    pub cases: Vec<CaseResult>,
    pub n: usize,
    pub n_rejected: usize,
    pub p_crpt: f64,
    /// Expected per-prover cost P_crpt · ω_crpt.
    pub expected_comp_seconds: f64,
    pub expected_comm_bytes: f64,
    /// Aggregate over the fallback sessions actually run.
    pub measured_comp_seconds: f64,
    pub measured_comm_bytes: u64,
    pub final_far: f64,
    pub final_frr: f64,
    /// Accept decisions from the inference stage, untouched by the fallback.
    pub inference_accepts: Vec<String>,
    pub crypto_failures: usize,
}

/// Fixed-FAR flow: accepted provers are final; rejected provers re-run
/// through cryptographic attestation, so honest provers end with zero FRR.
pub fn run_fixed_far(
    cases: &[ProverCase],
    clf: &AttClassifier,
    crypto: &mut dyn CryptoAttestor,
    cost: &CostModel,
) -> Result<FixedFarReport, HybridError> {
    let spec = &clf.trained_for;
    let mut results = Vec::with_capacity(cases.len());
    let mut inference_accepts = Vec::new();
    let mut n_rejected = 0usize;
    let mut measured_comp = 0.0;
    let mut measured_comm = 0u64;
    let mut crypto_failures = 0usize;

    for case in cases {
        let truth = case.in_window(spec);
        let accept = clf.accepts(&case.feature)?;
        if accept {
            inference_accepts.push(case.id.clone());
            results.push(CaseResult {
                id: case.id.clone(),
                truth_in_window: truth,
                inference_accept: true,
                crypto_accept: None,
                final_accept: true,
                failure: None,
            });
            continue;
        }
        n_rejected += 1;
        match crypto.attest(case) {
            Ok(v) => {
                measured_comp += v.comp_seconds;
                measured_comm += v.comm_bytes;
                results.push(CaseResult {
                    id: case.id.clone(),
                    truth_in_window: truth,
                    inference_accept: false,
                    crypto_accept: Some(v.accept),
                    final_accept: v.accept,
                    failure: None,
                });
            }
            Err(e) => {
                // fail closed, excluded from cost aggregation
                crypto_failures += 1;
                results.push(CaseResult {
                    id: case.id.clone(),
                    truth_in_window: truth,
                    inference_accept: false,
                    crypto_accept: None,
                    final_accept: false,
                    failure: Some(e.to_string()),
                });
            }
        }
    }

    let n = cases.len();
    let p_crpt = n_rejected as f64 / n.max(1) as f64;
    let positives = results.iter().filter(|r| r.truth_in_window).count();
    let negatives = n - positives;
    let false_rejects = results.iter().filter(|r| r.truth_in_window && !r.final_accept).count();
    let false_accepts = results.iter().filter(|r| !r.truth_in_window && r.final_accept).count();
    Ok(FixedFarReport {
        cases: results,
        n,
        n_rejected,
        p_crpt,
        expected_comp_seconds: p_crpt * cost.omega_crpt_comp_secs,
        expected_comm_bytes: p_crpt * cost.omega_crpt_comm_bytes as f64,
        measured_comp_seconds: measured_comp,
        measured_comm_bytes: measured_comm,
        final_far: if negatives == 0 { 0.0 } else { false_accepts as f64 / negatives as f64 },
        final_frr: if positives == 0 { 0.0 } else { false_rejects as f64 / positives as f64 },
        inference_accepts,
        crypto_failures,
    })
}

/// Random spot-check plan for the fixed-FRR flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpotCheckPlan {
    /// The false-accept estimate z, measured on the verifier's holdout.
    pub fa_estimate: u64,
    pub n_spot: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TradeoffPoint {
    pub n_spchk: usize,
    pub predicted_far: f64,
    pub simulated_far: f64,
    pub expected_comp_seconds: f64,
    pub expected_comm_bytes: f64,
}

#[derive(Debug, Clone)]
pub struct FixedFrrReport {
    pub cases: Vec<CaseResult>,
    pub n: usize,
    pub n_accepted: usize,
    pub n_spot: usize,
    pub far_before: f64,
    pub far_after: f64,
    pub predicted_t_star: u64,
    pub predicted_fa_new: u64,
    pub predicted_far: f64,
    pub p_spchk: f64,
    pub expected_comp_seconds: f64,
    pub expected_comm_bytes: f64,
    pub measured_comp_seconds: f64,
    pub measured_comm_bytes: u64,
    pub crypto_failures: usize,
}

fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(k);
    idx
}

/// Fixed-FRR flow: rejections are final; a seeded uniform sample of the
/// accepted provers is re-checked cryptographically and any caught false
/// accept flips to reject. Also emits the full trade-off curve over
/// N_spchk = 0..=N_a.
pub fn run_fixed_frr(
    cases: &[ProverCase],
    clf: &AttClassifier,
    crypto: &mut dyn CryptoAttestor,
    plan: &SpotCheckPlan,
    cost: &CostModel,
) -> Result<(FixedFrrReport, Vec<TradeoffPoint>), HybridError> {
    let spec = &clf.trained_for;
    let n = cases.len();
    let mut results: Vec<CaseResult> = Vec::with_capacity(n);
    let mut accepted_idx: Vec<usize> = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let truth = case.in_window(spec);
        let accept = clf.accepts(&case.feature)?;
        if accept {
            accepted_idx.push(i);
        }
        results.push(CaseResult {
            id: case.id.clone(),
            truth_in_window: truth,
            inference_accept: accept,
            crypto_accept: None,
            final_accept: accept,
            failure: None,
        });
    }
    let n_a = accepted_idx.len();
    if plan.n_spot > n_a {
        return Err(HybridError::Bounds(format!(
            "N_spchk = {} exceeds the {} accepted provers",
            plan.n_spot, n_a
        )));
    }
    if (plan.fa_estimate as usize) > plan.n_spot {
        return Err(HybridError::Bounds(format!(
            "plan requires z <= N_spchk, got z = {} > {}",
            plan.fa_estimate, plan.n_spot
        )));
    }

    let negatives = results.iter().filter(|r| !r.truth_in_window).count();
    let far_of = |fa: usize| if negatives == 0 { 0.0 } else { fa as f64 / negatives as f64 };
    let fa_before =
        results.iter().filter(|r| !r.truth_in_window && r.final_accept).count();

    // the executed spot-check at the planned sample size
    let mut measured_comp = 0.0;
    let mut measured_comm = 0u64;
    let mut crypto_failures = 0usize;
    for &i in &sample_without_replacement(n_a, plan.n_spot, plan.seed) {
        let case_idx = accepted_idx[i];
        match crypto.attest(&cases[case_idx]) {
            Ok(v) => {
                measured_comp += v.comp_seconds;
                measured_comm += v.comm_bytes;
                results[case_idx].crypto_accept = Some(v.accept);
                if !v.accept {
                    results[case_idx].final_accept = false;
                }
            }
            Err(e) => {
                crypto_failures += 1;
                results[case_idx].failure = Some(e.to_string());
            }
        }
    }
    let fa_after = results.iter().filter(|r| !r.truth_in_window && r.final_accept).count();

    // the trade-off curve; the ground-truth FA set stands in for crypto
    // verdicts at unexecuted sample sizes, which agree by construction
    let z_est = plan.fa_estimate.min(n_a as u64);
    let fa_indices: Vec<usize> = (0..n_a)
        .filter(|&i| !results[accepted_idx[i]].truth_in_window)
        .collect();
    let mut curve = Vec::with_capacity(n_a + 1);
    for n_spchk in 0..=n_a {
        let (_, fa_new) = effective_fa(z_est, n_a as u64, n_spchk as u64)?;
        let sample = sample_without_replacement(n_a, n_spchk, derive_seed(plan.seed, n_spchk as u64, 17));
        let caught = sample.iter().filter(|i| fa_indices.contains(i)).count();
        let p = n_spchk as f64 / n.max(1) as f64;
        curve.push(TradeoffPoint {
            n_spchk,
            predicted_far: far_of(fa_new as usize),
            simulated_far: far_of(fa_before - caught),
            expected_comp_seconds: p * cost.omega_crpt_comp_secs,
            expected_comm_bytes: p * cost.omega_crpt_comm_bytes as f64,
        });
    }

    let (t_star, fa_new) = effective_fa(z_est, n_a as u64, plan.n_spot as u64)?;
    let p_spchk = plan.n_spot as f64 / n.max(1) as f64;
    let report = FixedFrrReport {
        n,
        n_accepted: n_a,
        n_spot: plan.n_spot,
        far_before: far_of(fa_before),
        far_after: far_of(fa_after),
        predicted_t_star: t_star,
        predicted_fa_new: fa_new,
        predicted_far: far_of(fa_new as usize),
        p_spchk,
        expected_comp_seconds: p_spchk * cost.omega_crpt_comp_secs,
        expected_comm_bytes: p_spchk * cost.omega_crpt_comm_bytes as f64,
        measured_comp_seconds: measured_comp,
        measured_comm_bytes: measured_comm,
        crypto_failures,
        cases: results,
    };
    Ok((report, curve))
}

/// CSV with header
/// `n_spchk,predicted_far,measured_far,expected_comp_seconds,expected_comm_bytes`.
pub fn write_tradeoff_csv<W: Write>(curve: &[TradeoffPoint], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "n_spchk,predicted_far,measured_far,expected_comp_seconds,expected_comm_bytes")?;
    for p in curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.n_spchk, p.predicted_far, p.simulated_far, p.expected_comp_seconds, p.expected_comm_bytes
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn pmf_certainties() {
        // no false accepts to find
        assert_eq!(hypergeom_pmf(0, 10, 5, 0).unwrap(), 1.0);
        // sampling everyone finds them all
        assert_eq!(hypergeom_pmf(3, 10, 10, 3).unwrap(), 1.0);
        assert_eq!(hypergeom_pmf(3, 10, 10, 2).unwrap(), 0.0);
    }

    #[test]
    fn pmf_matches_subset_enumeration() {
        // N_a = 10, z = 2, N_spchk = 5, t = 1: enumerate all C(10,5) subsets
        let mut hits = 0u64;
        let mut total = 0u64;
        // iterate bitmasks of weight 5 over 10 elements; FAs are items 0 and 1
        for mask in 0u32..(1 << 10) {
            if mask.count_ones() != 5 {
                continue;
            }
            total += 1;
            let caught = (mask & 0b11).count_ones();
            if caught == 1 {
                hits += 1;
            }
        }
        assert_eq!(total, 252);
        assert_eq!(hits, 140);
        let pmf = hypergeom_pmf(2, 10, 5, 1).unwrap();
        assert!((pmf - 140.0 / 252.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_sums_to_one_for_random_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n_a = rng.gen_range(1..200u64);
            let z = rng.gen_range(0..=n_a);
            let n_spchk = rng.gen_range(0..=n_a);
            let sum: f64 =
                (0..=z).map(|t| hypergeom_pmf(z, n_a, n_spchk, t).unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12, "z={z} n_a={n_a} s={n_spchk}: {sum}");
        }
    }

    #[test]
    fn pmf_matches_monte_carlo() {
        let (z, n_a, n_spchk) = (4u64, 30u64, 12u64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = vec![0u64; (z + 1) as usize];
        let draws = 100_000;
        for _ in 0..draws {
            let sample = sample_without_replacement(n_a as usize, n_spchk as usize, rng.gen());
            let t = sample.iter().filter(|&&i| i < z as usize).count();
            counts[t] += 1;
        }
        for t in 0..=z {
            let mc = counts[t as usize] as f64 / draws as f64;
            let exact = hypergeom_pmf(z, n_a, n_spchk, t).unwrap();
            assert!((mc - exact).abs() < 0.01, "t={t}: mc {mc} vs exact {exact}");
        }
    }

    #[test]
    fn effective_fa_examples() {
        // sampling all accepted provers leaves no false accepts
        assert_eq!(effective_fa(3, 10, 10).unwrap(), (3, 0));
        assert_eq!(effective_fa(10, 10, 10).unwrap(), (10, 0));

        let (t_star, fa_new) = effective_fa(4, 20, 10).unwrap();
        assert_eq!((t_star, fa_new), (2, 2));
        let p2 = hypergeom_pmf(4, 20, 10, 2).unwrap();
        let p3 = hypergeom_pmf(4, 20, 10, 3).unwrap();
        assert!((p2 - 0.418).abs() < 1e-3, "pmf(2) = {p2}");
        assert!((p3 - 0.248).abs() < 1e-3, "pmf(3) = {p3}");
    }

    #[test]
    fn effective_fa_is_bounded_and_monotone() {
        let (z, n_a) = (6u64, 40u64);
        let mut prev_fa = z;
        for n_spchk in 0..=n_a {
            let (t_star, fa_new) = effective_fa(z, n_a, n_spchk).unwrap();
            assert!(fa_new <= z);
            assert!(t_star <= z);
            assert!(fa_new <= prev_fa, "fa_new must not grow with the sample");
            prev_fa = fa_new;
        }
        assert_eq!(prev_fa, 0);
    }

    #[test]
    fn bounds_are_enforced() {
        assert!(hypergeom_pmf(5, 4, 2, 1).is_err());
        assert!(hypergeom_pmf(2, 10, 11, 1).is_err());
        assert!(hypergeom_pmf(2, 10, 5, 3).is_err());
        assert!(effective_fa(5, 4, 2).is_err());
    }

    #[test]
    fn binomial_basics() {
        assert_eq!(binomial(10, 5), BigUint::from(252u32));
        assert_eq!(binomial(4, 0), BigUint::one());
        assert_eq!(binomial(4, 5), BigUint::zero());
        // stays exact far beyond u64
        let big = binomial(10_000, 5_000);
        assert!(big.bits() > 64);
    }
}
