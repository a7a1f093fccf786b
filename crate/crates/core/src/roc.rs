//! ROC sweeps, AUC, equal error rate, and operating-point calibration for
//! score-above-threshold acceptance.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RocError {
    #[error("evaluation set must contain both classes")]
    SingleClass,
    #[error("evaluation set is empty")]
    Empty,
    #[error("scores must be finite")]
    NonFiniteScore,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub tar: f64,
    pub trr: f64,
}

/// The ROC of a scored evaluation set: all operating points on the exact
/// threshold sweep, the area under the FAR–TAR curve, and the equal-error
/// operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RocSummary {
    pub points: Vec<RocPoint>,
    pub auc_far_tar: f64,
    pub eer: f64,
    pub eer_threshold: f64,
}

/// Threshold calibration target: cap the false-accept or false-reject rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    FixedFar,
    FixedFrr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    /// Set when the level was only reachable at a sentinel threshold (accept
    /// everything / reject everything), e.g. because of coarse score ties.
    pub degenerate: bool,
}

/// Candidate thresholds: midpoints between consecutive distinct scores plus
/// finite sentinels one unit below the minimum and above the maximum.
fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(sorted[0] - 1.0);
    for pair in sorted.windows(2) {
        out.push(pair[0] + (pair[1] - pair[0]) / 2.0);
    }
    out.push(sorted[sorted.len() - 1] + 1.0);
    out
}

fn rates_at(scored: &[(f64, bool)], threshold: f64) -> (f64, f64) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut pos = 0usize;
    let mut neg = 0usize;
    for &(s, label) in scored {
        if label {
            pos += 1;
            if s >= threshold {
                tp += 1;
            }
        } else {
            neg += 1;
            if s >= threshold {
                fp += 1;
            }
        }
    }
    (fp as f64 / neg as f64, tp as f64 / pos as f64)
}

fn check_classes(scored: &[(f64, bool)]) -> Result<(), RocError> {
    if scored.is_empty() {
        return Err(RocError::Empty);
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(RocError::NonFiniteScore);
    }
    let pos = scored.iter().filter(|(_, l)| *l).count();
    if pos == 0 || pos == scored.len() {
        return Err(RocError::SingleClass);
    }
    Ok(())
}

/// Sweeps all candidate thresholds over `(score, is_positive)` pairs.
/// Acceptance is score-above-threshold; AUC is the trapezoid area under the
/// FAR–TAR curve; the EER point minimizes |FAR − FRR| with ties broken toward
/// the lower threshold.
pub fn roc_summary(scored: &[(f64, bool)]) -> Result<RocSummary, RocError> {
    check_classes(scored)?;
    let scores: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    let thresholds = candidate_thresholds(&scores);

    let mut points = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        let (far, tar) = rates_at(scored, t);
        points.push(RocPoint { threshold: t, far, frr: 1.0 - tar, tar, trr: 1.0 - far });
    }

    // trapezoid under the FAR-TAR curve; thresholds ascend so FAR descends
    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[0].far - pair[1].far) * (pair[0].tar + pair[1].tar) / 2.0;
    }
    let auc = auc.clamp(0.0, 1.0);

    let mut best = &points[0];
    for p in &points[1..] {
        if (p.far - p.frr).abs() < (best.far - best.frr).abs() {
            best = p;
        }
    }
    Ok(RocSummary {
        auc_far_tar: auc,
        eer: (best.far + best.frr) / 2.0,
        eer_threshold: best.threshold,
        points,
    })
}

/// Picks the least-strict threshold meeting the level: the smallest threshold
/// with FAR ≤ level in `FixedFar` mode, the largest with FRR ≤ level in
/// `FixedFrr` mode.
pub fn calibrate_threshold(
    scored: &[(f64, bool)],
    mode: CalibrationMode,
    level: f64,
) -> Result<CalibrationOutcome, RocError> {
    check_classes(scored)?;
    let scores: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    let thresholds = candidate_thresholds(&scores);
    let n = thresholds.len();

    let pick = |iter: &mut dyn Iterator<Item = (usize, &f64)>| -> Option<(usize, f64)> {
        for (i, &t) in iter {
            let (far, tar) = rates_at(scored, t);
            let frr = 1.0 - tar;
            let ok = match mode {
                CalibrationMode::FixedFar => far <= level,
                CalibrationMode::FixedFrr => frr <= level,
            };
            if ok {
                return Some((i, t));
            }
        }
        None
    };

    let found = match mode {
        CalibrationMode::FixedFar => pick(&mut thresholds.iter().enumerate()),
        CalibrationMode::FixedFrr => {
            pick(&mut thresholds.iter().enumerate().rev()).map(|(i, t)| (i, t))
        }
    };
    // both sentinel ends always satisfy one of the two modes
    let (idx, threshold) = found.expect("sentinel threshold always attains the level");
    let (far, tar) = rates_at(scored, threshold);
    Ok(CalibrationOutcome {
        threshold,
        far,
        frr: 1.0 - tar,
        degenerate: idx == 0 || idx == n - 1,
    })
}

/// Writes the sweep as CSV with header `threshold,far,frr,tar,trr`.
pub fn write_roc_csv<W: Write>(summary: &RocSummary, w: &mut W) -> Result<(), RocError> {
    writeln!(w, "threshold,far,frr,tar,trr")?;
    for p in &summary.points {
        writeln!(w, "{},{},{},{},{}", p.threshold, p.far, p.frr, p.tar, p.trr)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) fn mann_whitney_auc(scored: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|(_, l)| *l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scored.iter().filter(|(_, l)| !*l).map(|(s, _)| *s).collect();
    let mut u = 0.0;
    for p in &pos {
        for n in &neg {
            if p > n {
                u += 1.0;
            } else if p == n {
                u += 0.5;
            }
        }
    }
    u / (pos.len() as f64 * neg.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfectly_separated() {
        let scored = vec![(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        let roc = roc_summary(&scored).unwrap();
        assert_eq!(roc.auc_far_tar, 1.0);
        assert_eq!(roc.eer, 0.0);
        // at threshold 0.5 the enumerated sweep has FAR = FRR = 0
        let mid = roc
            .points
            .iter()
            .find(|p| (p.threshold - 0.5).abs() < 1e-12)
            .expect("midpoint between 0.2 and 0.8");
        assert_eq!(mid.far, 0.0);
        assert_eq!(mid.frr, 0.0);
    }

    #[test]
    fn all_equal_scores_are_chance() {
        let scored = vec![(0.4, true), (0.4, false), (0.4, true), (0.4, false)];
        let roc = roc_summary(&scored).unwrap();
        assert!((roc.auc_far_tar - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rate_identities_hold_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scored: Vec<(f64, bool)> = (0..200)
            .map(|i| (rng.gen_range(0.0..1.0), i % 3 == 0))
            .collect();
        let roc = roc_summary(&scored).unwrap();
        for p in &roc.points {
            assert_eq!(p.tar + p.frr, 1.0);
            assert_eq!(p.trr + p.far, 1.0);
        }
        // FAR non-increasing in the threshold
        for pair in roc.points.windows(2) {
            assert!(pair[1].far <= pair[0].far);
        }
        assert!(roc.auc_far_tar >= 0.0 && roc.auc_far_tar <= 1.0);
    }

    #[test]
    fn auc_matches_mann_whitney_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let scored: Vec<(f64, bool)> = (0..120)
                .map(|_| {
                    // coarse scores force plenty of ties
                    let s = (rng.gen_range(0.0f64..1.0) * 8.0).round() / 8.0;
                    (s, rng.gen_bool(0.4))
                })
                .collect();
            let pos = scored.iter().filter(|(_, l)| *l).count();
            if pos == 0 || pos == scored.len() {
                continue;
            }
            let roc = roc_summary(&scored).unwrap();
            let mwu = mann_whitney_auc(&scored);
            assert!(
                (roc.auc_far_tar - mwu).abs() < 1e-9,
                "trapezoid {} vs mwu {}",
                roc.auc_far_tar,
                mwu
            );
        }
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(
            roc_summary(&[(0.1, true), (0.2, true)]),
            Err(RocError::SingleClass)
        ));
    }

    #[test]
    fn fixed_far_calibration() {
        // 20 negatives: FAR <= 0.05 admits at most one accepted negative
        let mut scored: Vec<(f64, bool)> = (0..20).map(|i| (i as f64 / 20.0, false)).collect();
        scored.extend((0..5).map(|i| (0.8 + i as f64 / 100.0, true)));
        let out = calibrate_threshold(&scored, CalibrationMode::FixedFar, 0.05).unwrap();
        assert!(out.far <= 0.05);
        let accepted_negs = scored
            .iter()
            .filter(|(s, l)| !*l && *s >= out.threshold)
            .count();
        assert!(accepted_negs <= 1);
    }

    #[test]
    fn separated_scores_calibrate_cleanly() {
        let scored = vec![(0.9, true), (0.85, true), (0.2, false), (0.15, false)];
        for mode in [CalibrationMode::FixedFar, CalibrationMode::FixedFrr] {
            let out = calibrate_threshold(&scored, mode, 0.05).unwrap();
            assert!(out.threshold > 0.2 && out.threshold < 0.85);
            assert_eq!(out.far, 0.0);
            assert_eq!(out.frr, 0.0);
            assert!(!out.degenerate);
        }
    }

    #[test]
    fn tied_scores_force_degenerate_point() {
        let scored = vec![(0.4, true), (0.4, false), (0.4, true), (0.4, false)];
        let out = calibrate_threshold(&scored, CalibrationMode::FixedFar, 0.05).unwrap();
        assert!(out.threshold > 0.4, "threshold must clear the common score");
        assert!(out.degenerate);
        assert_eq!(out.far, 0.0);
        assert_eq!(out.frr, 1.0, "everything rejected: TAR = 0");
    }

    #[test]
    fn csv_shape() {
        let scored = vec![(0.9, true), (0.1, false)];
        let roc = roc_summary(&scored).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&roc, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,far,frr,tar,trr\n"));
        assert_eq!(text.lines().count(), 1 + roc.points.len());
    }
}
