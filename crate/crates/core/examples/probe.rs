// Benchmark attack probe; removed before release.
use distattest::attest::{calibrate, default_attestor_hp, evaluate, labeled_from_corpus, train_attestor};
use distattest::model::{build_shadow_corpus, TrainHp};
use distattest::robust::{acceptance_rate, adversarial_train, perturb_first_layer, train_substitute, AttackConfig};
use distattest::roc::CalibrationMode;
use distattest::synth::PropertySpec;
use num::rational::Ratio;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let grid = vec![Ratio::new(1, 5), Ratio::new(4, 5)];
    let spec = PropertySpec::new(Ratio::new(1, 5), 0, grid).unwrap();
    let d = 6;
    let shp = TrainHp { epochs: 20, learning_rate: 0.05, batch_size: 64 };
    let dims = vec![d, 32, 1];

    let corpus = build_shadow_corpus(&spec, 150, 500, d, &dims, shp, 1).unwrap();
    let holdout_c = build_shadow_corpus(&spec, 40, 500, d, &dims, shp, 7).unwrap();
    let eval_c = build_shadow_corpus(&spec, 60, 500, d, &dims, shp, 99).unwrap();
    let prover_c = build_shadow_corpus(&spec, 150, 500, d, &dims, shp, 55).unwrap();
    println!("corpora {:?}", t0.elapsed());

    let ahp = default_attestor_hp();
    let (clf, s) = train_attestor(&corpus, &spec, ahp, 2).unwrap();
    let eval = labeled_from_corpus(&spec, &eval_c);
    println!("victim: train {:.3} eval {:.3}", s.train_auc, evaluate(&clf, &eval).unwrap().auc_far_tar);

    let holdout = labeled_from_corpus(&spec, &holdout_c);
    let (cal, out) = calibrate(&clf, &holdout, CalibrationMode::FixedFar, 0.05).unwrap();
    println!("calibrated thr {:.4} far {:.3} frr {:.3}", out.threshold, out.far, out.frr);

    let (sub, _) = train_substitute(&prover_c, &spec, ahp, 3).unwrap();
    let negatives: Vec<_> = eval_c.entries.iter()
        .filter(|e| !spec.in_window(eval_c.grid[e.grid_index]))
        .map(|e| e.feature.clone()).collect();
    let clean_far = acceptance_rate(&cal, &negatives).unwrap();

    for eps in [8.0/255.0, 16.0/255.0] {
        let cfg = AttackConfig::new(eps);
        let attacked: Vec<_> = negatives.iter().map(|f| perturb_first_layer(f, &sub, &cfg).unwrap()).collect();
        let far = acceptance_rate(&cal, &attacked).unwrap();
        println!("eps {:.4}: clean FAR {:.3} attacked FAR {:.3}", eps, clean_far, far);
    }

    // defence at the paper budget, light inner schedule
    let cfg = AttackConfig::default();
    let mut train_cfg = cfg;
    let attacked: Vec<_> = negatives.iter().map(|f| perturb_first_layer(f, &sub, &cfg).unwrap()).collect();
    for steps in [5usize, 10] {
        let mut train_cfg = cfg;
        train_cfg.steps = steps;
        let t1 = Instant::now();
        let (def, _) = adversarial_train(&corpus, &spec, &train_cfg, ahp, 2).unwrap();
        let (defcal, dout) = calibrate(&def, &holdout, CalibrationMode::FixedFar, 0.05).unwrap();
        println!("steps {steps} ({:?}): thr {:.3}, attacked FAR {:.3} (undefended {:.3}), clean AUC {:.3} vs {:.3}",
            t1.elapsed(),
            dout.threshold,
            acceptance_rate(&defcal, &attacked).unwrap(),
            acceptance_rate(&cal, &attacked).unwrap(),
            evaluate(&def, &eval).unwrap().auc_far_tar,
            evaluate(&clf, &eval).unwrap().auc_far_tar);
    }
    println!("total {:?}", t0.elapsed());
}
