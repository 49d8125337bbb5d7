use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC curve for "predict out-of-distribution when score >= threshold", with
/// out-of-distribution as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    pub points: Vec<RocPoint>,
    pub best_threshold: f64,
    pub youden_j: f64,
}

/// AUC via the Mann-Whitney rank statistic, P(ood > id) + 0.5 P(tie),
/// computed in O(n log n). The ROC points come from sweeping the unique score
/// thresholds; the best threshold maximizes Youden's J = TPR - FPR, ties
/// broken toward the higher threshold.
pub fn auc(id_scores: &[f64], ood_scores: &[f64]) -> Result<RocResult> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::Data("auc needs non-empty id and ood score sets".into()));
    }
    if id_scores.iter().chain(ood_scores).any(|s| !s.is_finite()) {
        return Err(Error::Data("non-finite score".into()));
    }
    let n_id = id_scores.len() as f64;
    let n_ood = ood_scores.len() as f64;

    let mut id_sorted = id_scores.to_vec();
    id_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut acc = 0.0;
    for &s in ood_scores {
        let below = id_sorted.partition_point(|&v| v < s);
        let not_above = id_sorted.partition_point(|&v| v <= s);
        acc += below as f64 + 0.5 * (not_above - below) as f64;
    }
    let auc = acc / (n_id * n_ood);

    // threshold sweep, highest threshold first
    let mut pairs: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / n_id, tpr: tp as f64 / n_ood, threshold: t });
    }

    let mut best = points[1];
    for p in &points[1..] {
        if p.tpr - p.fpr > best.tpr - best.fpr {
            best = *p;
        }
    }

    Ok(RocResult { auc, points, best_threshold: best.threshold, youden_j: best.tpr - best.fpr })
}

/// Trapezoid-rule area under the given ROC points.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// O(n*m) all-pairs AUC; the reference the rank form is checked against.
pub fn brute_force_auc(id_scores: &[f64], ood_scores: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &o in ood_scores {
        for &i in id_scores {
            if o > i {
                acc += 1.0;
            } else if o == i {
                acc += 0.5;
            }
        }
    }
    acc / (id_scores.len() * ood_scores.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    #[test]
    fn perfect_separation_is_one() {
        let r = auc(&[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.youden_j, 1.0);
        // any threshold in (0.2, 0.4] separates; the sweep lands on a score
        assert_eq!(r.best_threshold, 0.3);
    }

    #[test]
    fn single_tie_is_half() {
        let r = auc(&[0.3], &[0.3]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.best_threshold, 0.3);
        assert_eq!(r.youden_j, 0.0);
    }

    #[test]
    fn interleaved_pairs() {
        let r = auc(&[0.1, 0.4], &[0.2, 0.5]).unwrap();
        assert_eq!(r.auc, 0.75);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(auc(&[], &[1.0]).is_err());
        assert!(auc(&[1.0], &[]).is_err());
    }

    #[test]
    fn rank_matches_brute_force_and_trapezoid() {
        let mut rng = rng_from(42);
        for case in 0..50 {
            let n = rng.random_range(1..40);
            let m = rng.random_range(1..40);
            // quantized scores to force ties
            let id: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 10.0).round() / 10.0).collect();
            let ood: Vec<f64> =
                (0..m).map(|_| (rng.random::<f64>() * 10.0).round() / 10.0).collect();
            let r = auc(&id, &ood).unwrap();
            let bf = brute_force_auc(&id, &ood);
            assert!((r.auc - bf).abs() < 1e-12, "case {case}: {} vs {}", r.auc, bf);
            assert!((r.auc - trapezoid_auc(&r.points)).abs() < 1e-9);
            // complement symmetry
            let rev = auc(&ood, &id).unwrap();
            assert!((r.auc + rev.auc - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_points_are_monotone() {
        let mut rng = rng_from(7);
        let id: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        let ood: Vec<f64> = (0..80).map(|_| rng.random::<f64>() + 0.3).collect();
        let r = auc(&id, &ood).unwrap();
        for w in r.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
            assert!(w[1].threshold <= w[0].threshold);
        }
        let last = r.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn scaling_scores_scales_threshold_only() {
        let id = [0.1, 0.25, 0.3, 0.3];
        let ood = [0.2, 0.35, 0.6];
        let a = auc(&id, &ood).unwrap();
        let id2: Vec<f64> = id.iter().map(|v| v * 3.0).collect();
        let ood2: Vec<f64> = ood.iter().map(|v| v * 3.0).collect();
        let b = auc(&id2, &ood2).unwrap();
        assert_eq!(a.auc, b.auc);
        assert!((b.best_threshold - 3.0 * a.best_threshold).abs() < 1e-12);
    }

    #[test]
    fn youden_ties_break_toward_higher_threshold() {
        // J = 1 at thresholds 0.5 and 0.4 alike (no samples between them);
        // the sweep only visits observed scores, and must pick 0.5 first
        let r = auc(&[0.1, 0.2], &[0.5, 0.6]).unwrap();
        assert_eq!(r.best_threshold, 0.5);
    }
}
