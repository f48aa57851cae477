//! Ranking metrics, leave-one-domain-out harnesses and feature analyses.

mod analysis;
mod lodo;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analysis::{
    embed_2d, feature_ic50_r2, linear_probe, ridge_fit, write_embedding, RidgeFit, RIDGE,
};
pub use lodo::{
    ablate_faac, eligible_domains, lodo_fold, lodo_run, AblationRow, AblationTable, DomainDelta,
    FoldOutcome, LodoConfig, LodoEntry, LodoReport,
};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Label(format!("labels must be 0 or 1, got {bad}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUROC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve from the rank-sum statistic, with midranks for
/// tied scores.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let midrank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count();
        rank_sum += midrank * positives as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auroc: f64,
    /// (false-positive rate, true-positive rate) from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
}

impl RocResult {
    /// Trapezoidal area under `points`.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// ROC curve from a sweep over the distinct scores, highest first. Tied
/// scores move the curve diagonally.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if labels[order[end]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        start = end;
    }
    Ok(RocResult {
        auroc: auroc(scores, labels)?,
        points,
    })
}

pub fn write_roc(path: impl AsRef<Path>, roc: &RocResult) -> Result<()> {
    let path = path.as_ref();
    let err = |e| crate::data::csv_io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["fpr", "tpr"]).map_err(err)?;
    for (fpr, tpr) in &roc.points {
        w.write_record([fpr.to_string(), tpr.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let s = [0.9, 0.8, 0.2, 0.1];
        assert_eq!(auroc(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&s, &[0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.3; 5], &[1, 0, 1, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::Metric(_))));
        assert!(matches!(
            roc_points(&[0.1, 0.2], &[0, 0]),
            Err(Error::Metric(_))
        ));
        assert!(matches!(auroc(&[0.1, 0.2], &[0, 2]), Err(Error::Label(_))));
    }

    #[test]
    fn roc_shapes() {
        let r = roc_points(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(
            r.points,
            vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
        );
        let r = roc_points(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.auroc, 0.0);
        assert_eq!(r.trapezoid_area(), 0.0);
        let tied = roc_points(&[0.5, 0.5, 0.5], &[1, 0, 0]).unwrap();
        assert_eq!(tied.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn perfect_separation_collapsed_points() {
        // one threshold per distinct score, so group both classes by score
        let r = roc_points(&[1.0, 1.0, 0.0, 0.0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.points, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    fn brute_force(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..=30)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec((0u8..6).prop_map(|v| v as f64 / 5.0), n),
                    prop::collection::vec(0u8..=1, n),
                )
            })
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn matches_pairwise_counting((s, y) in instance()) {
            prop_assert!((auroc(&s, &y).unwrap() - brute_force(&s, &y)).abs() <= 1e-12);
        }

        #[test]
        fn complement_sums_to_one((s, y) in instance()) {
            let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
            prop_assert!((auroc(&s, &y).unwrap() + auroc(&s, &flipped).unwrap() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn invariant_to_increasing_transforms((s, y) in instance()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&t, &y).unwrap());
        }

        #[test]
        fn trapezoid_equals_rank_statistic((s, y) in instance()) {
            let r = roc_points(&s, &y).unwrap();
            prop_assert!((r.trapezoid_area() - r.auroc).abs() <= 1e-9);
            prop_assert_eq!(r.points.first().copied(), Some((0.0, 0.0)));
            prop_assert_eq!(r.points.last().copied(), Some((1.0, 1.0)));
            for w in r.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }

    #[test]
    fn roc_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("roc.csv");
        write_roc(&p, &roc_points(&[0.9, 0.1], &[1, 0]).unwrap()).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "fpr,tpr\n0,0\n0,1\n1,1\n"
        );
    }
}
