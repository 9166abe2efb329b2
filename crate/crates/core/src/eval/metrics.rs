//! Classification and segmentation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-based average precision: precision averaged over the ranks of the
/// positives, scores sorted descending with ties broken by ascending index.
/// `None` when there is no positive.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] != 0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    /// `None` for classes without positives; those are left out of the mean.
    pub per_class: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

/// Mean AP over classes. `scores` and `labels` are row-major `N×K`.
pub fn metric_map(scores: &[f64], labels: &[u8], k: usize) -> Result<MapReport> {
    check_matrix(scores.len(), labels.len(), k)?;
    let n = scores.len() / k;
    let per_class: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let s: Vec<f64> = (0..n).map(|i| scores[i * k + c]).collect();
            let l: Vec<u8> = (0..n).map(|i| labels[i * k + c]).collect();
            average_precision(&s, &l)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument("mAP: no class has a positive label".into()));
    }
    Ok(MapReport {
        map: present.iter().sum::<f64>() / present.len() as f64,
        excluded: (0..k).filter(|&c| per_class[c].is_none()).collect(),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
}

/// Macro F1 over `k` classes of 0/1 predictions; a class with
/// `P + R = 0` scores 0.
pub fn metric_f1(pred: &[u8], labels: &[u8], k: usize) -> Result<F1Report> {
    check_matrix(pred.len(), labels.len(), k)?;
    let n = pred.len() / k;
    let per_class: Vec<f64> = (0..k)
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for i in 0..n {
                match (pred[i * k + c] != 0, labels[i * k + c] != 0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect();
    Ok(F1Report {
        macro_f1: per_class.iter().sum::<f64>() / k as f64,
        per_class,
    })
}

/// Thresholds scores at 0.5.
pub fn threshold(scores: &[f64]) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= 0.5)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub oa: f64,
    pub aa: f64,
    /// Recall of every class that occurs in the labels.
    pub per_class: BTreeMap<usize, f64>,
}

/// Overall accuracy and the unweighted mean of per-class recalls.
pub fn metric_oa_aa(pred: &[usize], labels: &[usize]) -> Result<AccuracyReport> {
    if pred.len() != labels.len() {
        return Err(Error::shape("metric_oa_aa", format!("{} predictions vs {} labels", pred.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for (&p, &l) in pred.iter().zip(labels) {
        let e = counts.entry(l).or_default();
        e.1 += 1;
        if p == l {
            e.0 += 1;
            correct += 1;
        }
    }
    let per_class: BTreeMap<usize, f64> = counts.iter().map(|(&c, &(ok, n))| (c, ok as f64 / n as f64)).collect();
    Ok(AccuracyReport {
        oa: correct as f64 / labels.len() as f64,
        aa: per_class.values().sum::<f64>() / per_class.len() as f64,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub oa: f64,
    pub aa: f64,
    pub miou: f64,
    /// `None` for classes absent from both masks.
    pub iou: Vec<Option<f64>>,
}

/// Pixel OA/AA and mean IoU over classes with a nonzero union. Pixels whose
/// label equals `ignore_index` are dropped before counting.
pub fn metric_miou(pred: &[usize], label: &[usize], n_classes: usize, ignore_index: Option<usize>) -> Result<SegmentationReport> {
    if pred.len() != label.len() {
        return Err(Error::shape("metric_miou", format!("{} vs {} pixels", pred.len(), label.len())));
    }
    let mut conf = vec![0usize; n_classes * n_classes];
    let (mut p_valid, mut l_valid) = (Vec::new(), Vec::new());
    for (&p, &l) in pred.iter().zip(label) {
        if Some(l) == ignore_index {
            continue;
        }
        if l >= n_classes || p >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "class id {} out of range for {n_classes} classes",
                l.max(p)
            )));
        }
        conf[l * n_classes + p] += 1;
        p_valid.push(p);
        l_valid.push(l);
    }
    if l_valid.is_empty() {
        return Err(Error::InvalidArgument("no valid pixels".into()));
    }
    let acc = metric_oa_aa(&p_valid, &l_valid)?;
    let iou: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let tp = conf[c * n_classes + c];
            let row: usize = conf[c * n_classes..(c + 1) * n_classes].iter().sum();
            let col: usize = (0..n_classes).map(|r| conf[r * n_classes + c]).sum();
            let union = row + col - tp;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = iou.iter().flatten().copied().collect();
    Ok(SegmentationReport {
        oa: acc.oa,
        aa: acc.aa,
        miou: present.iter().sum::<f64>() / present.len() as f64,
        iou,
    })
}

fn check_matrix(a: usize, b: usize, k: usize) -> Result<()> {
    if k == 0 || a != b || a % k != 0 {
        return Err(Error::shape("metric", format!("{a} vs {b} entries for {k} classes")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_example() {
        let ap = average_precision(&[0.9, 0.4, 0.2], &[1, 0, 1]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[0, 0]), None);
    }

    #[test]
    fn ap_single_positive_at_last_rank() {
        let n = 7;
        let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut labels = vec![0u8; n];
        labels[0] = 1;
        assert!((average_precision(&scores, &labels).unwrap() - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn ties_break_by_index() {
        // equal scores: index 0 ranks first
        assert_eq!(average_precision(&[0.5, 0.5], &[1, 0]), Some(1.0));
        assert_eq!(average_precision(&[0.5, 0.5], &[0, 1]), Some(0.5));
    }

    #[test]
    fn map_excludes_classes_without_positives() {
        let r = metric_map(&[0.9, 0.1, 0.2, 0.3], &[1, 0, 0, 0], 2).unwrap();
        assert_eq!(r.excluded, vec![1]);
        assert_eq!(r.map, 1.0);
        assert!(metric_map(&[0.9, 0.1], &[0, 0], 2).is_err());
    }

    #[test]
    fn f1_examples() {
        // TP=1, FP=1, FN=1 in a single class
        let r = metric_f1(&[1, 1, 0], &[1, 0, 1], 1).unwrap();
        assert!((r.macro_f1 - 0.5).abs() < 1e-15);
        assert_eq!(metric_f1(&[0, 0], &[1, 1], 1).unwrap().macro_f1, 0.0);
        assert_eq!(metric_f1(&[1, 0, 0, 1], &[1, 0, 0, 1], 2).unwrap().macro_f1, 1.0);
    }

    #[test]
    fn oa_aa_hand_count() {
        let labels = [0, 0, 0, 0, 1, 1];
        let pred = [0, 0, 0, 1, 1, 0];
        let r = metric_oa_aa(&pred, &labels).unwrap();
        assert!((r.oa - 4.0 / 6.0).abs() < 1e-15);
        assert!((r.aa - 0.625).abs() < 1e-15);
        assert!(metric_oa_aa(&[], &[]).is_err());
    }

    #[test]
    fn miou_hand_count() {
        let r = metric_miou(&[0, 0, 1, 1], &[0, 1, 1, 1], 2, None).unwrap();
        assert_eq!(r.iou, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn miou_ignore_index() {
        let r = metric_miou(&[0, 1, 1], &[0, 255, 1], 2, Some(255)).unwrap();
        assert_eq!(r.miou, 1.0);
        assert!(metric_miou(&[0], &[255], 2, Some(255)).is_err());
    }
}
