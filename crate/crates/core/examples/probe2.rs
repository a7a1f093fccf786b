// Feature-statistics probe; removed before release.
use distattest::model::{build_shadow_corpus, TrainHp};
use distattest::synth::PropertySpec;
use num::rational::Ratio;

fn main() {
    let grid = vec![Ratio::new(1, 5), Ratio::new(4, 5)];
    let spec = PropertySpec::new(Ratio::new(1, 5), 0, grid).unwrap();
    let d = 6;
    for (epochs, lr, n) in [(30, 0.02, 500), (100, 0.05, 500), (100, 0.1, 1000)] {
        let hp = TrainHp { epochs, learning_rate: lr, batch_size: 64 };
        let corpus = build_shadow_corpus(&spec, 30, n, d, &[d, 8, 4, 1], hp, 1).unwrap();
        // per class: mean and std of (mean weight row, bias, row norm)
        for gi in 0..2 {
            let feats: Vec<_> =
                corpus.entries.iter().filter(|e| e.grid_index == gi).collect();
            let mut stats = vec![0.0f64; 4]; // mean w0, mean other w, mean bias, mean |row|
            let mut count = 0.0;
            for e in &feats {
                for row in &e.feature.rows {
                    stats[0] += row[0];
                    stats[1] += row[1..d].iter().sum::<f64>() / (d - 1) as f64;
                    stats[2] += row[d];
                    stats[3] += row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    count += 1.0;
                }
            }
            for s in &mut stats {
                *s /= count;
            }
            println!(
                "epochs {epochs} lr {lr} n {n} class {gi}: w0 {:.4} wrest {:.4} bias {:.4} norm {:.4}",
                stats[0], stats[1], stats[2], stats[3]
            );
        }
    }
}
