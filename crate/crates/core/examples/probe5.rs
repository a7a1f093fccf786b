// Training-dynamics probe; removed before release.
use distattest::attest::{labeled_from_corpus, train_attestor, RowNorm, SetNet};
use distattest::model::{build_shadow_corpus, TrainHp};
use distattest::nn::sigmoid;
use distattest::synth::PropertySpec;
use num::rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let grid = vec![Ratio::new(1, 5), Ratio::new(4, 5)];
    let spec = PropertySpec::new(Ratio::new(1, 5), 0, grid).unwrap();
    let d = 6;
    let shp = TrainHp { epochs: 20, learning_rate: 0.05, batch_size: 64 };
    let dims = vec![d, 32, 1];
    let corpus = build_shadow_corpus(&spec, 50, 500, d, &dims, shp, 1).unwrap();

    // initial logit spread for a few seeds
    let norm = RowNorm::from_corpus(&corpus);
    for seed in [2u64, 3, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = SetNet::glorot(corpus.row_len(), 32, &mut rng);
        let logits: Vec<f64> = corpus
            .entries
            .iter()
            .take(10)
            .map(|e| net.logit(&norm.normalize_feature(&e.feature)))
            .collect();
        println!("seed {seed} initial logits: {:?}", logits.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }

    // loss trajectory for seed 2 at two learning rates
    for lr in [0.003, 0.001] {
        for epochs in [20usize, 60, 100] {
            let ahp = TrainHp { epochs, learning_rate: lr, batch_size: 32 };
            let (clf, summary) = train_attestor(&corpus, &spec, ahp, 2).unwrap();
            let eval = labeled_from_corpus(&spec, &corpus);
            let mean_score: f64 = eval
                .iter()
                .map(|(f, _)| clf.score(f).unwrap())
                .sum::<f64>()
                / eval.len() as f64;
            println!(
                "seed2 lr {lr} e{epochs}: final loss {:.4} train auc {:.3} mean score {:.3}",
                summary.final_loss, summary.train_auc, mean_score
            );
        }
    }
    let _ = sigmoid(0.0);
}
