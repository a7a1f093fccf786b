// Imprint-strength sweep; removed before release.
use distattest::model::{derive_seed, extract_first_layer, train_mlp, TrainHp};
use distattest::synth::sample_dataset_with;
use num::rational::Ratio;

/// Feature summary: per-coordinate mean and std over rows.
fn summary(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; k];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut std = vec![0.0; k];
    for r in rows {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt();
    }
    mean.into_iter().chain(std).collect()
}

/// AUC of 1-D projection onto the class-mean difference (diagonal LDA-ish).
fn lda_auc(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a[0].len();
    let mean = |v: &[Vec<f64>]| {
        let mut m = vec![0.0; k];
        for x in v {
            for (mi, xi) in m.iter_mut().zip(x) {
                *mi += xi / v.len() as f64;
            }
        }
        m
    };
    let var = |v: &[Vec<f64>], m: &[f64]| {
        let mut s = vec![0.0; k];
        for x in v {
            for ((si, xi), mi) in s.iter_mut().zip(x).zip(m) {
                *si += (xi - mi) * (xi - mi) / v.len() as f64;
            }
        }
        s
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, &ma), var(b, &mb));
    let w: Vec<f64> = (0..k)
        .map(|i| (mb[i] - ma[i]) / (0.5 * (va[i] + vb[i]) + 1e-9))
        .collect();
    let proj = |x: &Vec<f64>| x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>();
    let mut u = 0.0;
    for x in a {
        for y in b {
            let (px, py) = (proj(x), proj(y));
            if py > px {
                u += 1.0;
            } else if py == px {
                u += 0.5;
            }
        }
    }
    u / (a.len() * b.len()) as f64
}

fn run(
    tag: &str,
    n: usize,
    d: usize,
    mu: f64,
    epochs: usize,
    lr: f64,
    dims: &[usize],
    per: usize,
) {
    let hp = TrainHp { epochs, learning_rate: lr, batch_size: 64 };
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for rep in 0..per {
        for (cls, ratio) in [(0, Ratio::new(1, 5)), (1, Ratio::new(4, 5))] {
            let ds_seed = derive_seed(1, cls, 2 * rep as u64);
            let m_seed = derive_seed(1, cls, 2 * rep as u64 + 1);
            let ds = sample_dataset_with(ratio, n, d, ds_seed, mu, 0.05).unwrap();
            let (model, _) = train_mlp(&ds, dims, hp, m_seed).unwrap();
            let f = extract_first_layer(&model).unwrap();
            let s = summary(&f.rows);
            if cls == 0 {
                lo.push(s);
            } else {
                hi.push(s);
            }
        }
    }
    // split half train/half eval for honest AUC
    let half = per / 2;
    let auc_train = lda_auc(&lo[..half], &hi[..half]);
    let auc_eval = lda_auc(&lo[half..], &hi[half..]);
    println!("{tag}: lda auc train-half {auc_train:.3} eval-half {auc_eval:.3}");
}

fn main() {
    let d = 6;
    run("base  e30 lr.02 n500 mu1", 500, d, 1.0, 30, 0.02, &[d, 8, 4, 1], 60);
    run("long  e100 lr.1 n1000 mu1", 1000, d, 1.0, 100, 0.1, &[d, 8, 4, 1], 60);
    run("mu2   e50 lr.05 n500", 500, d, 2.0, 50, 0.05, &[d, 8, 4, 1], 60);
    run("mu3   e50 lr.05 n500", 500, d, 3.0, 50, 0.05, &[d, 8, 4, 1], 60);
    run("short e10 lr.05 n500 mu1", 500, d, 1.0, 10, 0.05, &[d, 8, 4, 1], 60);
    run("tiny  e5 lr.1 n500 mu1", 500, d, 1.0, 5, 0.1, &[d, 8, 4, 1], 60);
    run("wide  e30 lr.05 n500 mu1 d6-16", 500, d, 1.0, 30, 0.05, &[d, 16, 1], 60);
    run("w32   e30 lr.05 n500 mu1 d6-32", 500, d, 1.0, 30, 0.05, &[d, 32, 1], 60);
    run("w32b  e50 lr.05 n500 mu1 d6-32", 500, d, 1.0, 50, 0.05, &[d, 32, 1], 60);
    run("w32c  e30 lr.1 n500 mu1 d6-32", 500, d, 1.0, 30, 0.1, &[d, 32, 1], 60);
    run("w32d  e15 lr.05 n500 mu1 d6-32", 500, d, 1.0, 15, 0.05, &[d, 32, 1], 60);
}
// appended variants
