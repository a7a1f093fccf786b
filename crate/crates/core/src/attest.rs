//! The inference-based attestation classifier: a permutation-invariant set
//! network over first-layer features, trained to separate models whose
//! training-data property falls in the accept window from all others.
//!
//! Rows are min–max normalized with statistics frozen from the training
//! corpus, then brought into a canonical order before the sum pooling, so a
//! score is bit-identical under any permutation of the input rows.

use std::io::{self, Read, Write};
use std::path::Path;

use num::rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{CorpusEntry, FirstLayerFeature, ShadowCorpus, TrainHp};
use crate::nn::{bce_loss, sigmoid, Grads, Mat, Net};
use crate::roc::{
    calibrate_threshold, roc_summary, CalibrationMode, CalibrationOutcome, RocError, RocSummary,
};
use crate::synth::{PropertySpec, SynthError};

const CLASSIFIER_MAGIC: &[u8; 4] = b"FAT1";

/// AUC at or above which a candidate window counts as good.
pub const AUC_GOOD_THRESHOLD: f64 = 0.85;

pub const PHI_HIDDEN: usize = 16;
pub const PHI_OUT: usize = 16;
pub const RHO_HIDDEN: usize = 8;
/// Leak of the set network's rectifiers; keeps every unit trainable.
pub const SETNET_LEAK: f64 = 0.01;

#[derive(Debug, Error)]
pub enum AttestError {
    #[error("corpus must contain examples inside and outside the window")]
    SingleClass,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("feature has no rows; sum pooling is undefined")]
    EmptyFeature,
    #[error("feature rows have length {got}, classifier expects {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("corpus grid does not match the property spec grid")]
    GridMismatch,
    #[error("score is not finite")]
    NonFiniteScore,
    #[error(transparent)]
    Roc(#[from] RocError),
    #[error("invalid spec: {0}")]
    Spec(#[from] SynthError),
    #[error("malformed classifier file: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Per-coordinate min–max statistics of the training corpus rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNorm {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl RowNorm {
    pub fn from_corpus(corpus: &ShadowCorpus) -> Self {
        let len = corpus.row_len();
        let mut min = vec![f64::INFINITY; len];
        let mut max = vec![f64::NEG_INFINITY; len];
        for e in &corpus.entries {
            for row in &e.feature.rows {
                for (i, v) in row.iter().enumerate() {
                    min[i] = min[i].min(*v);
                    max[i] = max[i].max(*v);
                }
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
        Self { min, range }
    }

    /// Maps a row into [0, 1] per coordinate; constant coordinates map to 0.
    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, v)| if self.range[i] > 0.0 { (v - self.min[i]) / self.range[i] } else { 0.0 })
            .collect()
    }

    pub fn denormalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(i, z)| self.min[i] + z * self.range[i])
            .collect()
    }

    pub fn normalize_feature(&self, f: &FirstLayerFeature) -> Vec<Vec<f64>> {
        f.rows.iter().map(|r| self.normalize_row(r)).collect()
    }
}

/// Sorts rows lexicographically under the total order on f64, giving every
/// permutation of the same multiset an identical summation order.
pub fn canonical_sort(rows: &mut [Vec<f64>]) {
    rows.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            let ord = x.total_cmp(y);
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    });
}

/// Per-row encoder, sum pooling, post-pool head.
#[derive(Debug, Clone, PartialEq)]
pub struct SetNet {
    pub phi: Net,
    pub rho: Net,
}

impl SetNet {
    /// `pool_rows` is the typical row count; the post-pool head's first layer
    /// is scaled down by it so the initial function sees mean-sized pooled
    /// activations and the rectifiers start alive.
    pub fn glorot(row_len: usize, pool_rows: usize, rng: &mut ChaCha8Rng) -> Self {
        let phi = Net::glorot(&[row_len, PHI_HIDDEN, PHI_OUT], rng).with_leak(SETNET_LEAK);
        let mut rho = Net::glorot(&[PHI_OUT, RHO_HIDDEN, 1], rng).with_leak(SETNET_LEAK);
        let scale = 1.0 / pool_rows.max(1) as f64;
        for v in &mut rho.layers[0].w.data {
            *v *= scale;
        }
        Self { phi, rho }
    }

    pub fn row_len(&self) -> usize {
        self.phi.input_dim()
    }

    /// Logit of normalized rows. The rows are canonically sorted internally.
    pub fn logit(&self, rows_norm: &[Vec<f64>]) -> f64 {
        let mut rows = rows_norm.to_vec();
        canonical_sort(&mut rows);
        let mut pooled = vec![0.0; self.phi.output_dim()];
        for row in &rows {
            for (acc, v) in pooled.iter_mut().zip(self.phi.forward(row)) {
                *acc += v;
            }
        }
        self.rho.forward(&pooled)[0]
    }

    /// Forward and backward for one example; parameter gradients accumulate
    /// into `gp`/`gr`. Returns the loss.
    fn forward_backward(
        &self,
        rows_norm: &[Vec<f64>],
        y: f64,
        gp: &mut Grads,
        gr: &mut Grads,
    ) -> f64 {
        let mut rows = rows_norm.to_vec();
        canonical_sort(&mut rows);
        let traces: Vec<_> = rows.iter().map(|r| self.phi.forward_trace(r)).collect();
        let mut pooled = vec![0.0; self.phi.output_dim()];
        for t in &traces {
            for (acc, v) in pooled.iter_mut().zip(t.acts.last().unwrap()) {
                *acc += v;
            }
        }
        let rho_trace = self.rho.forward_trace(&pooled);
        let logit = rho_trace.acts.last().unwrap()[0];
        let d_logit = sigmoid(logit) - y;
        let d_pooled = self.rho.backward(&rho_trace, &[d_logit], gr);
        for t in &traces {
            self.phi.backward(t, &d_pooled, gp);
        }
        bce_loss(logit, y)
    }

    /// Logit plus its gradient with respect to each input row, in the row
    /// order given (not canonicalized: callers perturb rows in place).
    pub fn logit_with_input_grads(&self, rows_norm: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let traces: Vec<_> = rows_norm.iter().map(|r| self.phi.forward_trace(r)).collect();
        let mut pooled = vec![0.0; self.phi.output_dim()];
        for t in &traces {
            for (acc, v) in pooled.iter_mut().zip(t.acts.last().unwrap()) {
                *acc += v;
            }
        }
        let rho_trace = self.rho.forward_trace(&pooled);
        let logit = rho_trace.acts.last().unwrap()[0];
        let mut gr = self.rho.zero_grads();
        let d_pooled = self.rho.backward(&rho_trace, &[1.0], &mut gr);
        let mut gp = self.phi.zero_grads();
        let grads = traces
            .iter()
            .map(|t| self.phi.backward(t, &d_pooled, &mut gp))
            .collect();
        (logit, grads)
    }
}

/// The attestation classifier: set network, frozen normalization, decision
/// threshold, and the property spec it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct AttClassifier {
    pub net: SetNet,
    pub norm: RowNorm,
    pub threshold: f64,
    pub trained_for: PropertySpec,
}

/// Reported next to a freshly trained classifier.
#[derive(Debug, Clone)]
pub struct AttTrainSummary {
    pub train_auc: f64,
    pub final_loss: f64,
}

impl AttClassifier {
    pub fn row_len(&self) -> usize {
        self.net.row_len()
    }

    fn check_feature(&self, f: &FirstLayerFeature) -> Result<(), AttestError> {
        if f.rows.is_empty() {
            return Err(AttestError::EmptyFeature);
        }
        if f.row_len() != self.row_len() {
            return Err(AttestError::ShapeMismatch { got: f.row_len(), want: self.row_len() });
        }
        Ok(())
    }

    /// Permutation-invariant score; higher means more likely in-window.
    pub fn score(&self, f: &FirstLayerFeature) -> Result<f64, AttestError> {
        self.check_feature(f)?;
        let rows = self.norm.normalize_feature(f);
        let s = sigmoid(self.net.logit(&rows));
        if !s.is_finite() {
            return Err(AttestError::NonFiniteScore);
        }
        Ok(s)
    }

    pub fn accepts(&self, f: &FirstLayerFeature) -> Result<bool, AttestError> {
        Ok(self.score(f)? >= self.threshold)
    }

    /// Serializes as `FAT1`: shape header, normalization vectors, parameters
    /// in little-endian doubles, threshold, property spec.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), AttestError> {
        w.write_all(CLASSIFIER_MAGIC)?;
        let write_dims = |w: &mut W, net: &Net| -> Result<(), AttestError> {
            let dims = net.dims();
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            Ok(())
        };
        write_dims(w, &self.net.phi)?;
        write_dims(w, &self.net.rho)?;
        w.write_all(&(self.norm.min.len() as u32).to_le_bytes())?;
        for v in self.norm.min.iter().chain(&self.norm.range) {
            w.write_all(&v.to_le_bytes())?;
        }
        let write_params = |w: &mut W, net: &Net| -> Result<(), AttestError> {
            for layer in &net.layers {
                for v in layer.w.data.iter().chain(&layer.b) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            Ok(())
        };
        write_params(w, &self.net.phi)?;
        write_params(w, &self.net.rho)?;
        w.write_all(&self.threshold.to_le_bytes())?;
        w.write_all(&self.trained_for.p_req.numer().to_le_bytes())?;
        w.write_all(&self.trained_for.p_req.denom().to_le_bytes())?;
        w.write_all(&(self.trained_for.window as u32).to_le_bytes())?;
        w.write_all(&(self.trained_for.grid.len() as u32).to_le_bytes())?;
        for g in &self.trained_for.grid {
            w.write_all(&g.numer().to_le_bytes())?;
            w.write_all(&g.denom().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, AttestError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CLASSIFIER_MAGIC {
            return Err(AttestError::Malformed(format!(
                "bad magic {magic:?}, expected {CLASSIFIER_MAGIC:?}"
            )));
        }
        let read_dims = |r: &mut R| -> Result<Vec<usize>, AttestError> {
            let len = read_u32(r)? as usize;
            (0..len).map(|_| Ok(read_u32(r)? as usize)).collect()
        };
        let phi_dims = read_dims(r)?;
        let rho_dims = read_dims(r)?;
        let row_len = read_u32(r)? as usize;
        let read_f64s = |r: &mut R, n: usize| -> Result<Vec<f64>, AttestError> {
            (0..n)
                .map(|_| {
                    let mut buf = [0u8; 8];
                    r.read_exact(&mut buf)?;
                    Ok(f64::from_le_bytes(buf))
                })
                .collect()
        };
        let min = read_f64s(r, row_len)?;
        let range = read_f64s(r, row_len)?;
        let read_net = |r: &mut R, dims: &[usize]| -> Result<Net, AttestError> {
            let mut layers = Vec::new();
            for w in dims.windows(2) {
                let (fan_in, fan_out) = (w[0], w[1]);
                let data = read_f64s(r, fan_in * fan_out)?;
                let b = read_f64s(r, fan_out)?;
                layers.push(crate::nn::Affine {
                    w: Mat { rows: fan_out, cols: fan_in, data },
                    b,
                });
            }
            Ok(Net { layers, leak: SETNET_LEAK })
        };
        let phi = read_net(r, &phi_dims)?;
        let rho = read_net(r, &rho_dims)?;
        let threshold = f64::from_le_bytes(read_bytes8(r)?);
        let p_num = u64::from_le_bytes(read_bytes8(r)?);
        let p_den = u64::from_le_bytes(read_bytes8(r)?);
        if p_den == 0 {
            return Err(AttestError::Malformed("zero denominator".into()));
        }
        let window = read_u32(r)? as usize;
        let grid_len = read_u32(r)? as usize;
        let mut grid = Vec::with_capacity(grid_len);
        for _ in 0..grid_len {
            let num = u64::from_le_bytes(read_bytes8(r)?);
            let den = u64::from_le_bytes(read_bytes8(r)?);
            if den == 0 {
                return Err(AttestError::Malformed("zero denominator".into()));
            }
            grid.push(Ratio::new(num, den));
        }
        let trained_for = PropertySpec::new(Ratio::new(p_num, p_den), window, grid)?;
        Ok(Self { net: SetNet { phi, rho }, norm: RowNorm { min, range }, threshold, trained_for })
    }

    pub fn save(&self, path: &Path) -> Result<(), AttestError> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self, AttestError> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }
}

pub fn default_attestor_hp() -> TrainHp {
    TrainHp { epochs: 300, learning_rate: 0.001, batch_size: 32 }
}

/// Labels a corpus entry as positive when its grid value lies in the window.
pub fn entry_label(spec: &PropertySpec, entry: &CorpusEntry, grid: &[Ratio<u64>]) -> bool {
    spec.in_window(grid[entry.grid_index])
}

/// A perturbation applied to one normalized feature during training; used by
/// adversarial training. Receives the current network and the example label.
pub(crate) type BatchPerturbation<'a> = dyn Fn(&SetNet, &RowNorm, &[Vec<f64>], f64) -> Vec<Vec<f64>> + 'a;

pub(crate) fn train_attestor_inner(
    corpus: &ShadowCorpus,
    spec: &PropertySpec,
    hp: TrainHp,
    seed: u64,
    perturb: Option<&BatchPerturbation>,
) -> Result<(AttClassifier, AttTrainSummary), AttestError> {
    if corpus.entries.is_empty() {
        return Err(AttestError::EmptyCorpus);
    }
    if corpus.grid != spec.grid {
        return Err(AttestError::GridMismatch);
    }
    spec.validate()?;
    let labels: Vec<f64> = corpus
        .entries
        .iter()
        .map(|e| entry_label(spec, e, &corpus.grid) as u8 as f64)
        .collect();
    let pos = labels.iter().filter(|y| **y == 1.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(AttestError::SingleClass);
    }

    let norm = RowNorm::from_corpus(corpus);
    let normalized: Vec<Vec<Vec<f64>>> = corpus
        .entries
        .iter()
        .map(|e| norm.normalize_feature(&e.feature))
        .collect();

    // every sixth example is held out to pick the best epoch checkpoint
    let val_idx: Vec<usize> = (0..normalized.len()).filter(|i| i % 6 == 5).collect();
    let train_idx: Vec<usize> =
        (0..normalized.len()).filter(|i| i % 6 != 5).collect();
    let val_usable = {
        let pos = val_idx.iter().filter(|&&i| labels[i] == 1.0).count();
        pos > 0 && pos < val_idx.len()
    };

    let rows_per_model = corpus.entries[0].feature.rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SetNet::glorot(corpus.row_len(), rows_per_model, &mut rng);
    let mut phi_adam = crate::nn::AdamState::new(&net.phi);
    let mut rho_adam = crate::nn::AdamState::new(&net.rho);
    let batch = hp.batch_size.max(1);
    let mut order = train_idx.clone();
    let mut final_loss = 0.0;
    let mut best: Option<(f64, SetNet)> = None;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut gp = net.phi.zero_grads();
            let mut gr = net.rho.zero_grads();
            for &i in chunk {
                let rows = match perturb {
                    Some(p) => p(&net, &norm, &normalized[i], labels[i]),
                    None => normalized[i].clone(),
                };
                epoch_loss += net.forward_backward(&rows, labels[i], &mut gp, &mut gr);
            }
            // gp.count counts rows; scale the row-encoder step by the same
            // per-example denominator as the head
            gp.count = gr.count;
            net.phi.apply_grads_adam(&gp, hp.learning_rate, &mut phi_adam);
            net.rho.apply_grads_adam(&gr, hp.learning_rate, &mut rho_adam);
        }
        final_loss = epoch_loss / order.len().max(1) as f64;

        if val_usable && (epoch % 5 == 4 || epoch + 1 == hp.epochs) {
            let scored: Vec<(f64, bool)> = val_idx
                .iter()
                .map(|&i| (sigmoid(net.logit(&normalized[i])), labels[i] == 1.0))
                .collect();
            let auc = roc_summary(&scored)?.auc_far_tar;
            if best.as_ref().map_or(true, |(b, _)| auc > *b) {
                best = Some((auc, net.clone()));
            }
        }
    }
    if let Some((_, checkpoint)) = best {
        net = checkpoint;
    }

    let clf = AttClassifier { net, norm, threshold: 0.5, trained_for: spec.clone() };
    let scored: Vec<(f64, bool)> = corpus
        .entries
        .iter()
        .zip(&labels)
        .map(|(e, y)| Ok((clf.score(&e.feature)?, *y == 1.0)))
        .collect::<Result<_, AttestError>>()?;
    let train_auc = roc_summary(&scored)?.auc_far_tar;
    Ok((clf, AttTrainSummary { train_auc, final_loss }))
}

/// Trains the attestation classifier on a shadow corpus; the positive class
/// is the window around `p_req`. Deterministic in `seed`; the threshold is
/// initialized to 0.5 pending calibration.
pub fn train_attestor(
    corpus: &ShadowCorpus,
    spec: &PropertySpec,
    hp: TrainHp,
    seed: u64,
) -> Result<(AttClassifier, AttTrainSummary), AttestError> {
    train_attestor_inner(corpus, spec, hp, seed, None)
}

/// Scores a labeled evaluation set and sweeps the ROC.
pub fn evaluate(
    clf: &AttClassifier,
    labeled: &[(FirstLayerFeature, bool)],
) -> Result<RocSummary, AttestError> {
    let scored: Vec<(f64, bool)> = labeled
        .iter()
        .map(|(f, y)| Ok((clf.score(f)?, *y)))
        .collect::<Result<_, AttestError>>()?;
    Ok(roc_summary(&scored)?)
}

/// Labels corpus entries against the classifier's own spec.
pub fn labeled_from_corpus(
    spec: &PropertySpec,
    corpus: &ShadowCorpus,
) -> Vec<(FirstLayerFeature, bool)> {
    corpus
        .entries
        .iter()
        .map(|e| (e.feature.clone(), entry_label(spec, e, &corpus.grid)))
        .collect()
}

/// Sets the decision threshold to the least-strict value meeting the level on
/// the holdout, returning the recalibrated classifier and the operating point.
pub fn calibrate(
    clf: &AttClassifier,
    holdout: &[(FirstLayerFeature, bool)],
    mode: CalibrationMode,
    level: f64,
) -> Result<(AttClassifier, CalibrationOutcome), AttestError> {
    let scored: Vec<(f64, bool)> = holdout
        .iter()
        .map(|(f, y)| Ok((clf.score(f)?, *y)))
        .collect::<Result<_, AttestError>>()?;
    let outcome = calibrate_threshold(&scored, mode, level)?;
    let mut out = clf.clone();
    out.threshold = outcome.threshold;
    Ok((out, outcome))
}

#[derive(Debug, Clone)]
pub struct WindowReport {
    pub window: usize,
    pub auc: f64,
    pub good: bool,
}

#[derive(Debug, Clone)]
pub struct WindowSelection {
    pub chosen: usize,
    pub reports: Vec<WindowReport>,
}

/// Splits the corpus per grid value into alternating train/test halves,
/// trains one attestor per candidate window, and picks the candidate with the
/// highest test AUC (ties toward the smaller window).
pub fn select_window(
    corpus: &ShadowCorpus,
    p_req: Ratio<u64>,
    candidates: &[usize],
    hp: TrainHp,
    seed: u64,
) -> Result<WindowSelection, AttestError> {
    assert!(!candidates.is_empty(), "need at least one candidate window");
    let mut seen: Vec<usize> = Vec::new();
    let mut train_entries = Vec::new();
    let mut test_entries = Vec::new();
    let mut counts = vec![0usize; corpus.grid.len()];
    for e in &corpus.entries {
        let k = counts[e.grid_index];
        counts[e.grid_index] += 1;
        if k % 2 == 0 {
            train_entries.push(e.clone());
        } else {
            test_entries.push(e.clone());
        }
    }
    let train = ShadowCorpus { grid: corpus.grid.clone(), entries: train_entries };
    let test = ShadowCorpus { grid: corpus.grid.clone(), entries: test_entries };

    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut reports = Vec::new();
    for &w in &sorted {
        let spec = PropertySpec::new(p_req, w, corpus.grid.clone())?;
        let (clf, _) = train_attestor(&train, &spec, hp, seed)?;
        let auc = evaluate(&clf, &labeled_from_corpus(&spec, &test))?.auc_far_tar;
        reports.push(WindowReport { window: w, auc, good: auc >= AUC_GOOD_THRESHOLD });
        seen.push(w);
    }
    let mut chosen = reports[0].window;
    let mut best = reports[0].auc;
    for r in &reports[1..] {
        if r.auc > best {
            best = r.auc;
            chosen = r.window;
        }
    }
    Ok(WindowSelection { chosen, reports })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, AttestError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_bytes8<R: Read>(r: &mut R) -> Result<[u8; 8], AttestError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(buf)
}
