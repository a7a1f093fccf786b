// Attestor tuning probe; removed before release.
use distattest::attest::{evaluate, labeled_from_corpus, train_attestor};
use distattest::model::{build_shadow_corpus, TrainHp};
use distattest::synth::PropertySpec;
use num::rational::Ratio;

fn main() {
    let grid = vec![Ratio::new(1, 5), Ratio::new(4, 5)];
    let spec = PropertySpec::new(Ratio::new(1, 5), 0, grid).unwrap();
    let d = 6;
    let shp = TrainHp { epochs: 20, learning_rate: 0.05, batch_size: 64 };
    let dims = vec![d, 32, 1];

    let corpus = build_shadow_corpus(&spec, 250, 500, d, &dims, shp, 1).unwrap();
    let eval1 = labeled_from_corpus(&spec, &build_shadow_corpus(&spec, 60, 500, d, &dims, shp, 99).unwrap());
    let eval2 = labeled_from_corpus(&spec, &build_shadow_corpus(&spec, 60, 500, d, &dims, shp, 77).unwrap());

    for (epochs, lr, batch) in [(150usize, 0.001, 32usize), (300, 0.001, 32), (150, 0.003, 64), (300, 0.0005, 32)] {
        for seed in [2u64, 3, 4] {
            let ahp = TrainHp { epochs, learning_rate: lr, batch_size: batch };
            let (clf, summary) = train_attestor(&corpus, &spec, ahp, seed).unwrap();
            let a1 = evaluate(&clf, &eval1).unwrap().auc_far_tar;
            let a2 = evaluate(&clf, &eval2).unwrap().auc_far_tar;
            println!(
                "e{epochs} lr{lr} b{batch} seed{seed}: train {:.3} eval {:.3}/{:.3}",
                summary.train_auc, a1, a2
            );
        }
    }
}
