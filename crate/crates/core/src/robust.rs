//! The malicious-prover attack on inference-based attestation and its
//! defence: sign-gradient ascent (PGD) on a substitute classifier's score,
//! applied to first-layer parameters in the classifier's normalized feature
//! space, frozen-first-layer fine-tuning to restore task accuracy, and
//! adversarial training of the attestation classifier.

use std::io::Write;

use thiserror::Error;

use crate::attest::{
    train_attestor_inner, AttClassifier, AttTrainSummary, AttestError, RowNorm, SetNet,
};
use crate::model::{install_first_layer, FirstLayerFeature, MlpModel, ModelError, ShadowCorpus,
    TrainHp};
use crate::synth::{LabeledDataset, PropertySpec};

/// Default perturbation radius, the usual 8/255.
pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Attest(#[from] AttestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("gradients became non-finite during the attack")]
    NonFiniteGradient,
}

/// L∞ perturbation budget in the classifier's normalized feature space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
}

impl AttackConfig {
    pub fn new(epsilon: f64) -> Self {
        Self { epsilon, steps: 20, step_size: epsilon / 8.0 }
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

/// PGD on the logit in normalized space. `direction = +1` ascends the
/// positive-class score, `-1` descends it. Returns the best iterate under
/// the canonicalized score, which is never worse than the start; `None`
/// means the start itself was best (or the budget is zero).
fn pgd_normalized(
    net: &SetNet,
    z0: &[Vec<f64>],
    cfg: &AttackConfig,
    direction: f64,
) -> Result<Option<Vec<Vec<f64>>>, AttackError> {
    if cfg.epsilon == 0.0 || cfg.steps == 0 {
        return Ok(None);
    }
    let mut z: Vec<Vec<f64>> = z0.to_vec();
    let mut best: Option<Vec<Vec<f64>>> = None;
    let mut best_obj = direction * net.logit(z0);
    for _ in 0..cfg.steps {
        let (_, grads) = net.logit_with_input_grads(&z);
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(AttackError::NonFiniteGradient);
        }
        for (zi, (gi, z0i)) in z.iter_mut().zip(grads.iter().zip(z0)) {
            for ((zv, gv), z0v) in zi.iter_mut().zip(gi).zip(z0i) {
                let step = direction * gv;
                if step > 0.0 {
                    *zv += cfg.step_size;
                } else if step < 0.0 {
                    *zv -= cfg.step_size;
                }
                *zv = zv.clamp(z0v - cfg.epsilon, z0v + cfg.epsilon);
            }
        }
        let obj = direction * net.logit(&z);
        if obj > best_obj {
            best_obj = obj;
            best = Some(z.clone());
        }
    }
    Ok(best)
}

/// Trains the malicious prover's substitute classifier on its own shadow
/// corpus; the contract is identical to `train_attestor`.
pub fn train_substitute(
    corpus_prover: &ShadowCorpus,
    spec: &PropertySpec,
    hp: TrainHp,
    seed: u64,
) -> Result<(AttClassifier, AttTrainSummary), AttackError> {
    Ok(crate::attest::train_attestor(corpus_prover, spec, hp, seed)?)
}

/// Adds adversarial noise to the first-layer feature by projected sign-
/// gradient ascent on the substitute's positive-class score. The returned
/// feature stays within `cfg.epsilon` of the input per coordinate in the
/// substitute's normalized space, and never scores below the input.
pub fn perturb_first_layer(
    f: &FirstLayerFeature,
    sub: &AttClassifier,
    cfg: &AttackConfig,
) -> Result<FirstLayerFeature, AttackError> {
    if f.rows.is_empty() {
        return Err(AttestError::EmptyFeature.into());
    }
    if f.row_len() != sub.row_len() {
        return Err(AttestError::ShapeMismatch { got: f.row_len(), want: sub.row_len() }.into());
    }
    let z0 = sub.norm.normalize_feature(f);
    match pgd_normalized(&sub.net, &z0, cfg, 1.0)? {
        None => Ok(f.clone()),
        Some(best) => {
            let rows = best.iter().map(|r| sub.norm.denormalize_row(r)).collect();
            Ok(FirstLayerFeature { rows, order_hint: f.order_hint.clone() })
        }
    }
}

/// Installs the perturbed first layer into the model, freezes it, and
/// fine-tunes the remaining layers. The returned model's first layer equals
/// `perturbed_first` bit for bit.
pub fn finetune_frozen(
    m: &MlpModel,
    perturbed_first: &FirstLayerFeature,
    ds: &LabeledDataset,
    hp: TrainHp,
    seed: u64,
) -> Result<(MlpModel, crate::model::TrainReport), AttackError> {
    let mut model = m.clone();
    install_first_layer(&mut model, perturbed_first)?;
    let report = crate::model::finetune(&mut model, ds, hp, seed, 1)?;
    Ok((model, report))
}

/// Adversarial training: every minibatch example is replaced by its
/// loss-maximizing perturbation against the current classifier, within the
/// same budget the attacker has. With a zero budget this reduces exactly to
/// `train_attestor`.
pub fn adversarial_train(
    corpus: &ShadowCorpus,
    spec: &PropertySpec,
    cfg: &AttackConfig,
    hp: TrainHp,
    seed: u64,
) -> Result<(AttClassifier, AttTrainSummary), AttackError> {
    let cfg = *cfg;
    let hook = move |net: &SetNet, _norm: &RowNorm, z: &[Vec<f64>], y: f64| -> Vec<Vec<f64>> {
        // maximize the example's loss: push negatives up, positives down
        let direction = if y >= 0.5 { -1.0 } else { 1.0 };
        match pgd_normalized(net, z, &cfg, direction) {
            Ok(Some(p)) => p,
            _ => z.to_vec(),
        }
    };
    Ok(train_attestor_inner(corpus, spec, hp, seed, Some(&hook))?)
}

/// Fraction of the given features the classifier accepts. On a set of true
/// negatives this is the measured FAR.
pub fn acceptance_rate(
    clf: &AttClassifier,
    feats: &[FirstLayerFeature],
) -> Result<f64, AttestError> {
    let mut accepted = 0usize;
    for f in feats {
        if clf.accepts(f)? {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / feats.len() as f64)
}

/// One line of the attack report.
#[derive(Debug, Clone)]
pub struct AttackRow {
    pub model_id: String,
    pub clean_score: f64,
    pub attacked_score: f64,
    pub accepted_before: bool,
    pub accepted_after: bool,
}

pub fn write_attack_csv<W: Write>(rows: &[AttackRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "model_id,clean_score,attacked_score,accepted_before,accepted_after")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.model_id, r.clean_score, r.attacked_score, r.accepted_before, r.accepted_after
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attest::{evaluate, labeled_from_corpus, train_attestor};
    use crate::model::{extract_first_layer, train_mlp, CorpusEntry};
    use crate::nn::{Affine, Mat, Net};
    use crate::synth::sample_dataset;
    use num::rational::Ratio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clustered(per_value: usize, seed: u64) -> (ShadowCorpus, PropertySpec) {
        let grid = vec![Ratio::new(1, 5), Ratio::new(4, 5)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for (gi, g) in grid.iter().enumerate() {
            let center = *g.numer() as f64 / *g.denom() as f64;
            for _ in 0..per_value {
                let mat: Vec<Vec<f64>> = (0..4)
                    .map(|_| (0..3).map(|_| center + rng.gen_range(-0.05..0.05)).collect())
                    .collect();
                entries.push(CorpusEntry { feature: FirstLayerFeature::new(mat), grid_index: gi });
            }
        }
        let spec = PropertySpec::new(Ratio::new(1, 5), 0, grid.clone()).unwrap();
        (ShadowCorpus { grid, entries }, spec)
    }

    fn hp() -> TrainHp {
        TrainHp { epochs: 60, learning_rate: 0.1, batch_size: 8 }
    }

    #[test]
    fn substitute_equals_victim_for_same_corpus_and_seed() {
        let (corpus, spec) = clustered(15, 1);
        let (victim, _) = train_attestor(&corpus, &spec, hp(), 7).unwrap();
        let (sub, _) = train_substitute(&corpus, &spec, hp(), 7).unwrap();
        assert_eq!(victim, sub);
    }

    #[test]
    fn substitute_tracks_victim_auc_on_common_eval() {
        let (victim_corpus, spec) = clustered(20, 1);
        let (prover_corpus, _) = clustered(20, 2);
        let (eval_corpus, _) = clustered(20, 3);
        let (victim, _) = train_attestor(&victim_corpus, &spec, hp(), 7).unwrap();
        let (sub, _) = train_substitute(&prover_corpus, &spec, hp(), 8).unwrap();
        let eval = labeled_from_corpus(&spec, &eval_corpus);
        let v = evaluate(&victim, &eval).unwrap().auc_far_tar;
        let s = evaluate(&sub, &eval).unwrap().auc_far_tar;
        assert!((v - s).abs() <= 0.15, "victim {v} substitute {s}");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let (_, spec) = clustered(2, 1);
        let empty = ShadowCorpus { grid: spec.grid.clone(), entries: vec![] };
        assert!(train_substitute(&empty, &spec, hp(), 1).is_err());
    }

    #[test]
    fn zero_epsilon_returns_input_exactly() {
        let (corpus, spec) = clustered(10, 4);
        let (sub, _) = train_attestor(&corpus, &spec, hp(), 7).unwrap();
        let f = &corpus.entries[0].feature;
        let out = perturb_first_layer(f, &sub, &AttackConfig::new(0.0)).unwrap();
        assert_eq!(f.rows, out.rows);
    }

    /// A hand-built classifier whose logit is a positive linear function of
    /// every input coordinate inside the perturbation ball.
    fn linear_scorer(spec: &PropertySpec) -> AttClassifier {
        let row_len = 3;
        let mut phi_l1 = Affine { w: Mat::zeros(16, row_len), b: vec![1.0; 16] };
        for j in 0..row_len {
            *phi_l1.w.at_mut(j, j) = 1.0;
        }
        let mut phi_l2 = Affine { w: Mat::zeros(16, 16), b: vec![0.0; 16] };
        for j in 0..row_len {
            *phi_l2.w.at_mut(j, j) = 1.0;
        }
        let mut rho_l1 = Affine { w: Mat::zeros(8, 16), b: vec![0.0; 8] };
        for j in 0..row_len {
            *rho_l1.w.at_mut(0, j) = 1.0;
        }
        rho_l1.b[0] = 1.0;
        let mut rho_l2 = Affine { w: Mat::zeros(1, 8), b: vec![0.0] };
        *rho_l2.w.at_mut(0, 0) = 1.0;
        AttClassifier {
            net: SetNet {
                phi: Net { layers: vec![phi_l1, phi_l2], leak: 0.0 },
                rho: Net { layers: vec![rho_l1, rho_l2], leak: 0.0 },
            },
            norm: RowNorm { min: vec![0.0; row_len], range: vec![1.0; row_len] },
            threshold: 0.5,
            trained_for: spec.clone(),
        }
    }

    #[test]
    fn one_step_on_linear_scorer_moves_by_step_size() {
        let (_, spec) = clustered(2, 1);
        let sub = linear_scorer(&spec);
        let f = FirstLayerFeature::new(vec![vec![0.4, 0.5, 0.6], vec![0.3, 0.2, 0.7]]);
        let cfg = AttackConfig { epsilon: 0.1, steps: 1, step_size: 0.0125 };
        let out = perturb_first_layer(&f, &sub, &cfg).unwrap();
        for (orig, new) in f.rows.iter().zip(&out.rows) {
            for (a, b) in orig.iter().zip(new) {
                assert!(
                    ((b - a) - cfg.step_size).abs() < 1e-12,
                    "moved by {} instead of +{}",
                    b - a,
                    cfg.step_size
                );
            }
        }
    }

    #[test]
    fn perturbation_respects_budget_and_never_hurts() {
        let (corpus, spec) = clustered(15, 6);
        let (sub, _) = train_attestor(&corpus, &spec, hp(), 7).unwrap();
        let cfg = AttackConfig::default();
        for e in corpus.entries.iter().take(8) {
            let out = perturb_first_layer(&e.feature, &sub, &cfg).unwrap();
            let z0 = sub.norm.normalize_feature(&e.feature);
            let z1 = sub.norm.normalize_feature(&out);
            for (a, b) in z0.iter().zip(&z1) {
                for (x, y) in a.iter().zip(b) {
                    assert!((y - x).abs() <= cfg.epsilon + 1e-9);
                }
            }
            let before = sub.score(&e.feature).unwrap();
            let after = sub.score(&out).unwrap();
            assert!(after >= before, "score dropped {before} -> {after}");
        }
    }

    #[test]
    fn attack_raises_far_on_uncalibrated_victim() {
        let (victim_corpus, spec) = clustered(25, 10);
        let (prover_corpus, _) = clustered(25, 11);
        let (victim, _) = train_attestor(&victim_corpus, &spec, hp(), 7).unwrap();
        let (sub, _) = train_substitute(&prover_corpus, &spec, hp(), 8).unwrap();

        let (eval_corpus, _) = clustered(25, 12);
        let negatives: Vec<FirstLayerFeature> = eval_corpus
            .entries
            .iter()
            .filter(|e| !spec.in_window(eval_corpus.grid[e.grid_index]))
            .map(|e| e.feature.clone())
            .collect();
        // the toy clusters sit far apart in normalized space, so the budget
        // here is larger than the benchmark default
        let cfg = AttackConfig::new(0.5);
        let attacked: Vec<FirstLayerFeature> = negatives
            .iter()
            .map(|f| perturb_first_layer(f, &sub, &cfg).unwrap())
            .collect();
        let clean_far = acceptance_rate(&victim, &negatives).unwrap();
        let attacked_far = acceptance_rate(&victim, &attacked).unwrap();
        assert!(
            attacked_far > clean_far,
            "attack must raise FAR: clean {clean_far}, attacked {attacked_far}"
        );
    }

    #[test]
    fn finetune_keeps_first_layer_bit_exact() {
        let ds = sample_dataset(Ratio::new(1, 2), 96, 4, 3).unwrap();
        // converged base model, so fine-tuning restores rather than improves
        let thp = TrainHp { epochs: 40, learning_rate: 0.05, batch_size: 16 };
        let (model, base_report) = train_mlp(&ds, &[4, 6, 1], thp, 5).unwrap();
        let mut feature = extract_first_layer(&model).unwrap();
        for row in &mut feature.rows {
            row.iter_mut().for_each(|v| *v += 0.01);
        }

        // zero fine-tune epochs leave the deeper layers untouched
        let none = TrainHp { epochs: 0, ..thp };
        let (frozen0, _) = finetune_frozen(&model, &feature, &ds, none, 9).unwrap();
        assert_eq!(frozen0.net.layers[1], model.net.layers[1]);
        assert_eq!(extract_first_layer(&frozen0).unwrap().rows, feature.rows);

        let (tuned, report) = finetune_frozen(&model, &feature, &ds, thp, 9).unwrap();
        assert_eq!(extract_first_layer(&tuned).unwrap().rows, feature.rows);
        assert!(
            (report.train_accuracy - base_report.train_accuracy).abs() <= 0.05,
            "restored {} vs original {}",
            report.train_accuracy,
            base_report.train_accuracy
        );
    }

    #[test]
    fn zero_budget_defence_equals_plain_training() {
        let (corpus, spec) = clustered(12, 13);
        let (plain, ps) = train_attestor(&corpus, &spec, hp(), 3).unwrap();
        let (adv, asum) =
            adversarial_train(&corpus, &spec, &AttackConfig::new(0.0), hp(), 3).unwrap();
        assert_eq!(plain, adv);
        assert_eq!(ps.final_loss.to_bits(), asum.final_loss.to_bits());
    }

    #[test]
    fn defence_lowers_attacked_far() {
        let (victim_corpus, spec) = clustered(25, 20);
        let (prover_corpus, _) = clustered(25, 21);
        let cfg = AttackConfig::new(0.25);
        let (victim, _) = train_attestor(&victim_corpus, &spec, hp(), 7).unwrap();
        let (defended, _) =
            adversarial_train(&victim_corpus, &spec, &cfg, hp(), 7).unwrap();
        let (sub, _) = train_substitute(&prover_corpus, &spec, hp(), 8).unwrap();

        let (eval_corpus, _) = clustered(25, 22);
        let attacked: Vec<FirstLayerFeature> = eval_corpus
            .entries
            .iter()
            .filter(|e| !spec.in_window(eval_corpus.grid[e.grid_index]))
            .map(|e| perturb_first_layer(&e.feature, &sub, &cfg).unwrap())
            .collect();
        let before = acceptance_rate(&victim, &attacked).unwrap();
        let after = acceptance_rate(&defended, &attacked).unwrap();
        assert!(after <= before, "defence must not raise attacked FAR: {before} -> {after}");

        // clean utility must not collapse
        let eval = labeled_from_corpus(&spec, &eval_corpus);
        let clean_victim = evaluate(&victim, &eval).unwrap().auc_far_tar;
        let clean_defended = evaluate(&defended, &eval).unwrap().auc_far_tar;
        assert!(
            clean_victim - clean_defended <= 0.05,
            "clean AUC dropped too far: {clean_victim} -> {clean_defended}"
        );
    }
}
