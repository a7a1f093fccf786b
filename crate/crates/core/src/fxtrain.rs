//! Plaintext fixed-point reference trainer for the linear model used by the
//! secure-training protocol. Every operation here mirrors one secure gate
//! under the identical ring/truncation rule, so the protocol's reconstructed
//! weights must equal this trainer's output bit for bit. It doubles as the
//! honest prover's local trainer, which is what makes the fidelity check
//! between the prover's model and the securely trained model meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::MlpModel;
use crate::mpc::ring::{ring_matmul, FxEncoding, RingElem};
use crate::mpc::MpcError;
use crate::nn::{Affine, Mat, Net};
use crate::synth::LabeledDataset;

/// Hyperparameters of the fixed-point linear trainer. Batches are contiguous
/// slices of the (fixed) record order; the effective step is
/// `learning_rate / batch_size`, encoded once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxHp {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub frac_bits: u32,
}

impl Default for FxHp {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, learning_rate: 0.1, frac_bits: 16 }
    }
}

/// A linear model in ring representation: weights, bias, scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxModel {
    pub weights: Vec<RingElem>,
    pub bias: RingElem,
    pub frac_bits: u32,
}

impl FxModel {
    pub fn decode(&self) -> (Vec<f64>, f64) {
        let fx = FxEncoding::new(self.frac_bits);
        (fx.decode_all(&self.weights), fx.decode(self.bias))
    }

    /// View as an affine-plus-logistic task model.
    pub fn to_mlp(&self) -> MlpModel {
        let (w, b) = self.decode();
        MlpModel {
            net: Net {
                layers: vec![Affine {
                    w: Mat { rows: 1, cols: w.len(), data: w },
                    b: vec![b],
                }],
                leak: 0.0,
            },
        }
    }
}

/// Encoded dataset: row-major feature matrix and label vector at scale f,
/// plus the sensitive column as raw 0/1 ring values (scale zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxDataset {
    pub n: usize,
    pub d: usize,
    pub x: Vec<RingElem>,
    pub y: Vec<RingElem>,
    pub sensitive: Vec<RingElem>,
    pub frac_bits: u32,
}

pub fn encode_dataset(ds: &LabeledDataset, frac_bits: u32) -> Result<FxDataset, MpcError> {
    let fx = FxEncoding::new(frac_bits);
    let n = ds.len();
    let d = ds.dim();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for rec in &ds.records {
        for v in &rec.features {
            x.push(fx.encode(*v)?);
        }
        y.push(fx.encode(rec.task_label as u8 as f64)?);
        sensitive.push(RingElem(rec.sensitive as u64));
    }
    Ok(FxDataset { n, d, x, y, sensitive, frac_bits })
}

/// Deterministic initial weights, uniform in ±1/sqrt(d), encoded.
pub fn init_model(d: usize, frac_bits: u32, seed: u64) -> FxModel {
    let fx = FxEncoding::new(frac_bits);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / (d as f64).sqrt();
    let weights = (0..d)
        .map(|_| fx.encode(rng.gen_range(-bound..bound)).expect("small init in range"))
        .collect();
    FxModel { weights, bias: RingElem::ZERO, frac_bits }
}

/// The batch schedule: contiguous index ranges over the fixed record order,
/// identical for the reference and the secure run. A nonzero `shuffle_seed`
/// permutes the order first.
pub fn batch_plan(n: usize, batch_size: usize, shuffle_seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle_seed != 0 {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        order.shuffle(&mut rng);
    }
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

fn gather_rows(x: &[RingElem], d: usize, idx: &[usize]) -> Vec<RingElem> {
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(&x[i * d..(i + 1) * d]);
    }
    out
}

/// Mini-batch gradient descent on the squared error of the affine output, in
/// pure fixed point: ring products accumulated at doubled scale, one
/// arithmetic-shift truncation per entry, the public step factor folded into
/// a single encoded constant.
pub fn train(
    data: &FxDataset,
    init: &FxModel,
    hp: FxHp,
    shuffle_seed: u64,
) -> Result<FxModel, MpcError> {
    if init.weights.len() != data.d {
        return Err(MpcError::ShapeMismatch { got: init.weights.len(), want: data.d });
    }
    if data.frac_bits != hp.frac_bits || init.frac_bits != hp.frac_bits {
        return Err(MpcError::FracMismatch { a: data.frac_bits, b: hp.frac_bits });
    }
    let f = hp.frac_bits;
    let fx = FxEncoding::new(f);
    let plan = batch_plan(data.n, hp.batch_size, shuffle_seed);
    let lr_eff = fx.encode(hp.learning_rate / hp.batch_size.max(1) as f64)?;

    let mut w = init.weights.clone();
    let mut bias = init.bias;
    for _ in 0..hp.epochs {
        for batch in &plan {
            let xb = gather_rows(&data.x, data.d, batch);
            let b = batch.len();

            // predictions: (B×d)·(d×1) at 2f, truncated, plus bias
            let p: Vec<RingElem> = ring_matmul(&xb, &w, b, data.d, 1)
                .into_iter()
                .map(|v| v.asr(f) + bias)
                .collect();
            // errors against the labels
            let e: Vec<RingElem> =
                batch.iter().zip(&p).map(|(&i, &pi)| pi - data.y[i]).collect();

            // weight gradient: (d×B)·(B×1) at 2f, truncated
            let mut xt = vec![RingElem::ZERO; data.d * b];
            for (col, &i) in batch.iter().enumerate() {
                for j in 0..data.d {
                    xt[j * b + col] = data.x[i * data.d + j];
                }
            }
            let g: Vec<RingElem> =
                ring_matmul(&xt, &e, data.d, b, 1).into_iter().map(|v| v.asr(f)).collect();

            // step: multiply by the encoded lr/B and truncate
            for (wj, gj) in w.iter_mut().zip(&g) {
                *wj = *wj - (*gj * lr_eff).asr(f);
            }
            let e_sum = e.iter().fold(RingElem::ZERO, |acc, &v| acc + v);
            bias = bias - (e_sum * lr_eff).asr(f);
        }
    }
    Ok(FxModel { weights: w, bias, frac_bits: f })
}

/// Fixed-point affine prediction for one encoded input row.
pub fn predict_encoded(model: &FxModel, x_row: &[RingElem]) -> RingElem {
    let dot = x_row
        .iter()
        .zip(&model.weights)
        .fold(RingElem::ZERO, |acc, (&x, &w)| acc + x * w);
    dot.asr(model.frac_bits) + model.bias
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_dataset;
    use num::rational::Ratio;

    #[test]
    fn zero_epochs_returns_init() {
        let ds = sample_dataset(Ratio::new(1, 2), 32, 4, 1).unwrap();
        let data = encode_dataset(&ds, 16).unwrap();
        let init = init_model(4, 16, 7);
        let hp = FxHp { epochs: 0, ..Default::default() };
        let out = train(&data, &init, hp, 0).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn training_is_deterministic_and_batch_order_sensitive() {
        let ds = sample_dataset(Ratio::new(3, 10), 48, 4, 2).unwrap();
        let data = encode_dataset(&ds, 16).unwrap();
        let init = init_model(4, 16, 7);
        let hp = FxHp { epochs: 3, batch_size: 16, learning_rate: 0.1, frac_bits: 16 };
        let a = train(&data, &init, hp, 0).unwrap();
        let b = train(&data, &init, hp, 0).unwrap();
        assert_eq!(a, b);
        let c = train(&data, &init, hp, 99).unwrap();
        assert_ne!(a, c, "a different batch order must change the trajectory");
    }

    #[test]
    fn learns_the_linear_signal() {
        // the synthetic label rule is a threshold on the first coordinate, so
        // squared-error training should pick up a positive first weight
        let ds = sample_dataset(Ratio::new(1, 2), 256, 4, 3).unwrap();
        let data = encode_dataset(&ds, 16).unwrap();
        let init = init_model(4, 16, 7);
        let hp = FxHp { epochs: 10, batch_size: 16, learning_rate: 0.1, frac_bits: 16 };
        let out = train(&data, &init, hp, 0).unwrap();
        let (w, _) = out.decode();
        assert!(w[0] > 0.05, "first weight {} should carry the signal", w[0]);

        // and the trained model should beat chance on its training labels
        let mlp = out.to_mlp();
        let acc = crate::model::accuracy_on(&mlp, &ds);
        assert!(acc > 0.6, "training accuracy {acc}");
    }

    #[test]
    fn batch_plan_partitions_everything() {
        let plan = batch_plan(10, 4, 0);
        assert_eq!(plan.len(), 3);
        let mut all: Vec<usize> = plan.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
