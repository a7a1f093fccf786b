//! Distributional property attestation for ML training data.
//!
//! A prover demonstrates to a verifier that its model's training data has a
//! required distributional property (e.g., the fraction of records with a
//! sensitive attribute value) without revealing the data. Three mechanisms
//! are provided:
//!
//! * **Inference-based attestation** ([`attest`]): a permutation-invariant
//!   classifier over the first-layer parameters of the prover's model,
//!   trained on shadow models ([`model`]) and calibrated on ROC operating
//!   points ([`roc`]). Its robustness against first-layer perturbation
//!   attacks is handled in [`robust`].
//! * **Cryptographic attestation** ([`mpc`], [`proto`]): the prover
//!   secret-shares its dataset to two non-colluding servers which run
//!   `DistCheck` and secure training over additive shares in a power-of-two
//!   ring; the verifier reconstructs the verdict and the trained model.
//! * **Hybrid attestation** ([`hybrid`]): inference first, cryptographic
//!   fallback for rejected provers (fixed FAR) or random spot-checks of
//!   accepted provers (fixed FRR), with a hypergeometric model of the
//!   residual false-accept count and expected-cost accounting.
//!
//! Synthetic data with an exactly controllable property lives in [`synth`];
//! [`fxtrain`] is the plaintext fixed-point reference trainer that the
//! secure training protocol is held bit-exact against.

pub mod attest;
pub mod fxtrain;
pub mod hybrid;
pub mod model;
pub mod mpc;
pub mod nn;
pub mod proto;
pub mod robust;
pub mod roc;
pub mod synth;
