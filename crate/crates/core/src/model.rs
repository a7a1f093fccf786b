//! Plain-text training of small MLP task models (prover models and the
//! verifier's shadow models) and extraction of the first-layer feature that
//! the attestation classifier consumes.

use std::io::{self, Read, Write};
use std::path::Path;

use num::rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::nn::{bce_loss, sigmoid, Net};
use crate::synth::{sample_dataset, LabeledDataset, PropertySpec, SynthError};

const CORPUS_MAGIC: &[u8; 4] = b"SHC1";

/// Increase of the full-dataset loss between epochs beyond which training is
/// flagged as divergent.
pub const LOSS_INCREASE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("layer dims {dims:?} do not start with data dimension {d}")]
    DimMismatch { dims: Vec<usize>, d: usize },
    #[error("input has dimension {got}, model expects {want}")]
    InputDim { got: usize, want: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("model has no hidden layer")]
    NoHiddenLayer,
    #[error("shadow training failed for grid value {grid_index}, replicate {replicate}: {source}")]
    Shadow {
        grid_index: usize,
        replicate: usize,
        #[source]
        source: Box<ModelError>,
    },
    #[error("synthesis failed: {0}")]
    Synth(#[from] SynthError),
    #[error("malformed corpus file: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Training hyperparameters: epoch count, learning rate, and minibatch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHp {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainHp {
    fn default() -> Self {
        // mirrors the small tabular configuration: 100 epochs, lr 0.01, batch 64
        Self { epochs: 100, learning_rate: 0.01, batch_size: 64 }
    }
}

/// An MLP classifier with rectifier hidden layers and an affine output that
/// is squashed through the logistic function at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: Net,
}

impl MlpModel {
    pub fn layer_dims(&self) -> Vec<usize> {
        self.net.dims()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }
}

/// Summary returned alongside a trained model.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub train_accuracy: f64,
    /// Mean full-dataset loss at the end of every epoch.
    pub epoch_losses: Vec<f64>,
    /// First epoch whose full-dataset loss rose by more than
    /// [`LOSS_INCREASE_TOLERANCE`], if any.
    pub diverged_at: Option<usize>,
}

/// Default hidden sizes used for shadow and prover models at desk scale.
pub fn default_dims(d: usize) -> Vec<usize> {
    vec![d, 8, 4, 1]
}

/// Hidden sizes of the full-size tabular model.
pub fn full_dims(d: usize) -> Vec<usize> {
    vec![d, 32, 16, 8, 1]
}

fn dataset_loss_and_accuracy(net: &Net, ds: &LabeledDataset) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for rec in &ds.records {
        let z = net.forward(&rec.features)[0];
        let y = rec.task_label as u8 as f64;
        loss += bce_loss(z, y);
        if (sigmoid(z) >= 0.5) == rec.task_label {
            correct += 1;
        }
    }
    (loss / ds.len() as f64, correct as f64 / ds.len() as f64)
}

fn sgd_loop(
    net: &mut Net,
    ds: &LabeledDataset,
    hp: TrainHp,
    rng: &mut ChaCha8Rng,
    frozen_below: usize,
) -> Result<TrainReport, ModelError> {
    let batch = hp.batch_size.max(1);
    let mut epoch_losses = Vec::with_capacity(hp.epochs);
    let mut diverged_at = None;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut prev_loss = f64::INFINITY;

    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let mut grads = net.zero_grads();
            for &i in chunk {
                let rec = &ds.records[i];
                let trace = net.forward_trace(&rec.features);
                let z = trace.acts.last().unwrap()[0];
                let d = sigmoid(z) - rec.task_label as u8 as f64;
                net.backward(&trace, &[d], &mut grads);
            }
            net.apply_grads(&grads, hp.learning_rate, frozen_below);
        }
        let (loss, _) = dataset_loss_and_accuracy(net, ds);
        if !loss.is_finite() || !net.params_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        if loss > prev_loss + LOSS_INCREASE_TOLERANCE && diverged_at.is_none() {
            diverged_at = Some(epoch);
        }
        prev_loss = loss;
        epoch_losses.push(loss);
    }
    let (_, train_accuracy) = dataset_loss_and_accuracy(net, ds);
    Ok(TrainReport { train_accuracy, epoch_losses, diverged_at })
}

/// Trains an MLP with minibatch SGD on the logistic cross-entropy,
/// deterministically in `seed`.
pub fn train_mlp(
    ds: &LabeledDataset,
    dims: &[usize],
    hp: TrainHp,
    seed: u64,
) -> Result<(MlpModel, TrainReport), ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if dims.first() != Some(&ds.dim()) || dims.last() != Some(&1) {
        return Err(ModelError::DimMismatch { dims: dims.to_vec(), d: ds.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Net::glorot(dims, &mut rng);
    let report = sgd_loop(&mut net, ds, hp, &mut rng, 0)?;
    Ok((MlpModel { net }, report))
}

/// Continues training an existing model in place, leaving the lowest
/// `frozen_below` layers untouched.
pub fn finetune(
    m: &mut MlpModel,
    ds: &LabeledDataset,
    hp: TrainHp,
    seed: u64,
    frozen_below: usize,
) -> Result<TrainReport, ModelError> {
    if ds.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if m.input_dim() != ds.dim() {
        return Err(ModelError::InputDim { got: ds.dim(), want: m.input_dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sgd_loop(&mut m.net, ds, hp, &mut rng, frozen_below)
}

/// Forward pass: logistic squashing of the final affine output.
pub fn predict(m: &MlpModel, x: &[f64]) -> Result<f64, ModelError> {
    if x.len() != m.input_dim() {
        return Err(ModelError::InputDim { got: x.len(), want: m.input_dim() });
    }
    Ok(sigmoid(m.net.forward(x)[0]))
}

pub fn accuracy_on(m: &MlpModel, ds: &LabeledDataset) -> f64 {
    dataset_loss_and_accuracy(&m.net, ds).1
}

/// The first-layer slice fed to the attestation classifier: one row per
/// first-hidden neuron, each a weight row concatenated with its bias. The
/// rows denote a multiset; `order_hint` records the originating neuron index
/// and carries no semantic meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstLayerFeature {
    pub rows: Vec<Vec<f64>>,
    pub order_hint: Vec<usize>,
}

impl FirstLayerFeature {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        let order_hint = (0..rows.len()).collect();
        Self { rows, order_hint }
    }

    pub fn row_len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

/// Extracts the first weight matrix rows, each concatenated with its bias.
pub fn extract_first_layer(m: &MlpModel) -> Result<FirstLayerFeature, ModelError> {
    if m.net.layers.len() < 2 {
        return Err(ModelError::NoHiddenLayer);
    }
    let first = &m.net.layers[0];
    let rows = (0..first.w.rows)
        .map(|r| {
            let mut row = first.w.row(r).to_vec();
            row.push(first.b[r]);
            row
        })
        .collect();
    Ok(FirstLayerFeature::new(rows))
}

/// Overwrites the first layer of `m` from a feature, honoring `order_hint`.
pub fn install_first_layer(m: &mut MlpModel, f: &FirstLayerFeature) -> Result<(), ModelError> {
    if m.net.layers.len() < 2 {
        return Err(ModelError::NoHiddenLayer);
    }
    let first = &mut m.net.layers[0];
    let d = first.w.cols;
    if f.rows.len() != first.w.rows || f.row_len() != d + 1 {
        return Err(ModelError::InputDim { got: f.row_len(), want: d + 1 });
    }
    for (slot, row) in f.order_hint.iter().zip(&f.rows) {
        let dst = &mut first.w.data[slot * d..(slot + 1) * d];
        dst.copy_from_slice(&row[..d]);
        first.b[*slot] = row[d];
    }
    Ok(())
}

/// A labeled collection of first-layer features with their true grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowCorpus {
    pub grid: Vec<Ratio<u64>>,
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub feature: FirstLayerFeature,
    pub grid_index: usize,
}

impl ShadowCorpus {
    pub fn row_len(&self) -> usize {
        self.entries.first().map_or(0, |e| e.feature.row_len())
    }

    pub fn class_count(&self, grid_index: usize) -> usize {
        self.entries.iter().filter(|e| e.grid_index == grid_index).count()
    }

    /// Serializes as `SHC1`: entry/row/column counts, then per entry the grid
    /// index and the row matrix in little-endian doubles.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ModelError> {
        let rows = self.entries.first().map_or(0, |e| e.feature.rows.len());
        w.write_all(CORPUS_MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(self.row_len() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.len() as u32).to_le_bytes())?;
        for g in &self.grid {
            w.write_all(&g.numer().to_le_bytes())?;
            w.write_all(&g.denom().to_le_bytes())?;
        }
        for e in &self.entries {
            w.write_all(&(e.grid_index as u32).to_le_bytes())?;
            for row in &e.feature.rows {
                for v in row {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CORPUS_MAGIC {
            return Err(ModelError::Malformed(format!(
                "bad magic {magic:?}, expected {CORPUS_MAGIC:?}"
            )));
        }
        let n = read_u32(r)? as usize;
        let rows = read_u32(r)? as usize;
        let row_len = read_u32(r)? as usize;
        let grid_len = read_u32(r)? as usize;
        let mut grid = Vec::with_capacity(grid_len);
        for _ in 0..grid_len {
            let num = read_u64(r)?;
            let den = read_u64(r)?;
            if den == 0 {
                return Err(ModelError::Malformed("zero denominator in grid".into()));
            }
            grid.push(Ratio::new(num, den));
        }
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let grid_index = read_u32(r)? as usize;
            if grid_index >= grid_len {
                return Err(ModelError::Malformed("grid index out of range".into()));
            }
            let mut mat = Vec::with_capacity(rows);
            for _ in 0..rows {
                let mut row = Vec::with_capacity(row_len);
                for _ in 0..row_len {
                    let mut buf = [0u8; 8];
                    r.read_exact(&mut buf)?;
                    row.push(f64::from_le_bytes(buf));
                }
                mat.push(row);
            }
            entries.push(CorpusEntry { feature: FirstLayerFeature::new(mat), grid_index });
        }
        Ok(Self { grid, entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }
}

/// splitmix64, used to derive independent per-model seeds.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Trains `per_value` shadow models per grid value on independently sampled
/// datasets and returns their first-layer features labeled with the true grid
/// value. Order-deterministic regardless of worker scheduling.
pub fn build_shadow_corpus(
    spec: &PropertySpec,
    per_value: usize,
    n: usize,
    d: usize,
    dims: &[usize],
    hp: TrainHp,
    seed: u64,
) -> Result<ShadowCorpus, ModelError> {
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|gi| (0..per_value).map(move |rep| (gi, rep)))
        .collect();
    let entries: Result<Vec<CorpusEntry>, ModelError> = jobs
        .par_iter()
        .map(|&(gi, rep)| {
            let wrap = |source: ModelError| ModelError::Shadow {
                grid_index: gi,
                replicate: rep,
                source: Box::new(source),
            };
            let ds_seed = derive_seed(seed, gi as u64, 2 * rep as u64);
            let model_seed = derive_seed(seed, gi as u64, 2 * rep as u64 + 1);
            let ds = sample_dataset(spec.grid[gi], n, d, ds_seed)?;
            let (model, _) = train_mlp(&ds, dims, hp, model_seed).map_err(wrap)?;
            let feature = extract_first_layer(&model).map_err(wrap)?;
            Ok(CorpusEntry { feature, grid_index: gi })
        })
        .collect();
    Ok(ShadowCorpus { grid: spec.grid.clone(), entries: entries? })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
