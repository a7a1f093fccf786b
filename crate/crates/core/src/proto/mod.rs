//! The outsourced attestation protocol: the prover secret-shares its dataset
//! and initial weights to two non-colluding servers, the servers run
//! `DistCheck` and secure training over their shares, and the verifier
//! reconstructs the verdict bit and the trained model. A direct two-party
//! mode exists solely to demonstrate why outsourcing is needed: there a
//! malicious prover can invert the verdict by flipping its share of the
//! output bit.

pub mod flipbit;
pub mod net;
pub mod session;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{predict, MlpModel};
use crate::mpc::MpcError;
use crate::synth::PropertySpec;

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("session aborted")]
    Aborted,
    #[error("role thread panicked")]
    RolePanic,
    #[error("synthesis: {0}")]
    Synth(#[from] crate::synth::SynthError),
}

/// Public session metadata shared by all four roles. The dataset size `n` is
/// deliberately public: the servers need it to frame the input shares and to
/// cross-multiply the window bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub session_id: u64,
    pub n: usize,
    pub d: usize,
    pub spec: PropertySpec,
    pub hp: crate::fxtrain::FxHp,
    /// Batch-order seed fed to `fxtrain::batch_plan`; zero keeps record order.
    pub train_shuffle_seed: u64,
    pub dealer_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    InputSharing,
    DistCheck,
    Training,
    Output,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::InputSharing => "input_sharing",
            Phase::DistCheck => "distcheck",
            Phase::Training => "training",
            Phase::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    pub phase: Phase,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub millis: f64,
}

/// Per-phase byte and wall-clock accounting for one role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub phases: Vec<PhaseStats>,
}

impl Transcript {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseStats> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    pub fn total_bytes(&self) -> u64 {
        self.phases.iter().map(|p| p.bytes_sent + p.bytes_received).sum()
    }

    pub fn total_millis(&self) -> f64 {
        self.phases.iter().map(|p| p.millis).sum()
    }

    /// CSV with header `phase,bytes_sent,bytes_received,millis`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "phase,bytes_sent,bytes_received,millis")?;
        for p in &self.phases {
            writeln!(
                w,
                "{},{},{},{}",
                p.phase.name(),
                p.bytes_sent,
                p.bytes_received,
                p.millis
            )?;
        }
        Ok(())
    }
}

/// Tolerance of the fidelity check between the prover's model and the
/// securely trained one, in score units: 2^-(f-2).
pub fn fidelity_tolerance(frac_bits: u32) -> f64 {
    2f64.powi(-((frac_bits as i32) - 2))
}

#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub matches: bool,
    /// Set when no probes were evaluated (k = 0), which vacuously passes.
    pub degenerate: bool,
    pub max_deviation: f64,
    pub reason: Option<String>,
}

/// Sends `k` seeded random probes through both models and requires the
/// predictions to agree within [`fidelity_tolerance`].
pub fn fidelity_check(
    m_p: &MlpModel,
    m_2pc: &MlpModel,
    k: usize,
    frac_bits: u32,
    seed: u64,
) -> FidelityReport {
    if m_p.layer_dims() != m_2pc.layer_dims() {
        return FidelityReport {
            matches: false,
            degenerate: false,
            max_deviation: f64::INFINITY,
            reason: Some(format!(
                "dimension mismatch: {:?} vs {:?}",
                m_p.layer_dims(),
                m_2pc.layer_dims()
            )),
        };
    }
    if k == 0 {
        return FidelityReport {
            matches: true,
            degenerate: true,
            max_deviation: 0.0,
            reason: Some("no probes evaluated".into()),
        };
    }
    let tol = fidelity_tolerance(frac_bits);
    let d = m_p.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    for _ in 0..k {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = predict(m_p, &x).expect("dims checked");
        let b = predict(m_2pc, &x).expect("dims checked");
        max_dev = max_dev.max((a - b).abs());
    }
    FidelityReport { matches: max_dev <= tol, degenerate: false, max_deviation: max_dev, reason: None }
}

/// Plaintext reference for the DistCheck verdict: is the dataset's sensitive
/// count inside the window, by exact integer cross-multiplication.
pub fn plaintext_distcheck(count: usize, n: usize, spec: &PropertySpec) -> bool {
    let (lo, hi) = crate::synth::window_range(spec);
    let count = count as u128;
    let n = n as u128;
    let lo_ok = count * *lo.denom() as u128 >= *lo.numer() as u128 * n;
    let hi_ok = count * *hi.denom() as u128 <= *hi.numer() as u128 * n;
    lo_ok && hi_ok
}
