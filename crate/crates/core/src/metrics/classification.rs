use std::collections::HashMap;
use std::fs;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Macro and micro F1 over the classes present in `gold ∪ pred`.
///
/// A per-class precision, recall or F1 with a zero denominator counts as 0.
pub fn f1_scores<L: Eq + Hash>(gold: &[L], pred: &[L]) -> Result<(f64, f64)> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut index: HashMap<&L, usize> = HashMap::new();
    for l in gold.iter().chain(pred) {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    let k = index.len();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    for (g, p) in gold.iter().zip(pred) {
        let (gi, pi) = (index[g], index[p]);
        if gi == pi {
            tp[gi] += 1;
        } else {
            fp[pi] += 1;
            fneg[gi] += 1;
        }
    }
    let macro_f1 = (0..k)
        .map(|c| f1_from_counts(tp[c], fp[c], fneg[c]))
        .sum::<f64>()
        / k as f64;
    let micro_f1 = f1_from_counts(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    Ok((macro_f1, micro_f1))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from_counts(tp: usize, fp: usize, fneg: usize) -> f64 {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One operating point: rows scoring `>= threshold` are called positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "float_or_inf")]
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Area under the ROC curve by the rank statistic (ties count ½) and the
/// curve itself at every distinct score, framed by `(0,0)` and `(1,1)`.
/// Higher scores mean "more positive".
pub fn roc_auc<T: Scalar>(scores: &[T], is_positive: &[bool]) -> Result<(f64, Vec<RocPoint>)> {
    if scores.len() != is_positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: is_positive.len(),
        });
    }
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    let n_neg = is_positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<(f64, bool)> = scores
        .iter()
        .zip(is_positive)
        .map(|(&s, &p)| (s.to_f64_lossy(), p))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));

    // midranks, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].0 == order[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let auc = (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let s = order[k - 1].0;
        while k > 0 && order[k - 1].0 == s {
            if order[k - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok((auc, points))
}

/// CSV `threshold,fpr,tpr`.
pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<()> {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// JSON has no infinities; they travel as the strings `"inf"` / `"-inf"`.
mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_half_f1() {
        let g = ["a", "b", "c", "a"];
        assert_eq!(f1_scores(&g, &g).unwrap(), (1.0, 1.0));
        let (ma, mi) = f1_scores(&["A", "A", "B", "B"], &["A", "B", "A", "B"]).unwrap();
        assert!((ma - 0.5).abs() < 1e-12 && (mi - 0.5).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        // C never predicted: F1_C = 0, others perfect
        let (ma, _) = f1_scores(&["A", "B", "C"], &["A", "B", "B"]).unwrap();
        let f1_b = 2.0 * 0.5 * 1.0 / 1.5;
        assert!((ma - (1.0 + f1_b + 0.0) / 3.0).abs() < 1e-12);
        assert!(f1_scores(&["A"], &["A", "B"]).is_err());
    }

    #[test]
    fn auc_examples() {
        let (auc, _) = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 0.75);
        let (auc, _) = roc_auc(&[0.1, 0.2, 0.9, 0.95], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 1.0);
        let (auc, _) = roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(auc, 0.5);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn roc_points_are_monotone_with_sentinels() {
        let (_, pts) = roc_auc(
            &[0.1, 0.4, 0.35, 0.8, 0.4],
            &[false, false, true, true, true],
        )
        .unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        // 4 distinct scores + 2 sentinels
        assert_eq!(pts.len(), 6);
        for w in pts.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        let json = serde_json::to_string(&pts).unwrap();
        let back: Vec<RocPoint> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, pts);
    }
}
