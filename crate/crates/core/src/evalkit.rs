//! Overlap metrics for binary masks and ROC analysis for saliency maps.

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, Plane};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dsc: f64,
    pub jsi: f64,
    pub acc: f64,
    pub sens: f64,
    pub spec: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        // 0/0 means the class is missing from gt; it scores 1 only if pred agrees
        let ratio = |num: usize, den: usize, absent_in_both: bool| {
            if den == 0 {
                if absent_in_both {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let total = tp + fp + tn + fn_;
        Self {
            dsc: ratio(2 * tp, 2 * tp + fp + fn_, true),
            jsi: ratio(tp, tp + fp + fn_, true),
            acc: ratio(tp + tn, total, true),
            sens: ratio(tp, tp + fn_, fp == 0),
            spec: ratio(tn, tn + fp, fn_ == 0),
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn mask_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricsReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, tn, fn_))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// (fpr, tpr), non-decreasing in both coordinates, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps the threshold down through every distinct saliency value, calling a
/// pixel positive when its score is at least the threshold.
pub fn roc_auc(saliency: &Plane, gt: &BinaryMask) -> Result<RocCurve> {
    if saliency.width() != gt.width() || saliency.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "saliency {}x{} vs ground truth {}x{}",
            saliency.width(),
            saliency.height(),
            gt.width(),
            gt.height()
        )));
    }
    let pos = gt.count();
    let neg = gt.data().len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateMask);
    }
    if let Some(i) = saliency.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::OutOfRange { index: i, value: saliency.data()[i] });
    }
    let mut order: Vec<usize> = (0..saliency.data().len()).collect();
    let s = saliency.data();
    order.sort_unstable_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = s[order[i]];
        while i < order.len() && s[order[i]] == v {
            if gt.data()[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    // the lowest distinct value already admits every pixel; the sentinel is a no-op
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Ok(RocCurve { points, auc })
}

pub struct EvalPair {
    pub id: String,
    pub pred: BinaryMask,
    pub gt: BinaryMask,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub dsc: f64,
    pub jsi: f64,
    pub acc: f64,
    pub sens: f64,
    pub spec: f64,
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    pub rows: Vec<(String, MetricsReport)>,
    pub mean: MeanMetrics,
}

/// Per-image metrics and their unweighted (macro) average.
pub fn batch_evaluate(pairs: &[EvalPair]) -> Result<BatchReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows = pairs
        .par_iter()
        .map(|p| mask_metrics(&p.pred, &p.gt).map(|m| (p.id.clone(), m)))
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mut mean = MeanMetrics::default();
    for (_, m) in &rows {
        mean.dsc += m.dsc;
        mean.jsi += m.jsi;
        mean.acc += m.acc;
        mean.sens += m.sens;
        mean.spec += m.spec;
    }
    mean.dsc /= n;
    mean.jsi /= n;
    mean.acc /= n;
    mean.sens /= n;
    mean.spec /= n;
    Ok(BatchReport { rows, mean })
}

impl BatchReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "id,dsc,jsi,acc,sens,spec")?;
        for (id, m) in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", id, m.dsc, m.jsi, m.acc, m.sens, m.spec)?;
        }
        let m = &self.mean;
        writeln!(out, "mean,{},{},{},{},{}", m.dsc, m.jsi, m.acc, m.sens, m.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn halves(left: bool) -> BinaryMask {
        BinaryMask::from_fn(20, 10, |x, _| (x < 10) == left)
    }

    #[test]
    fn identical_masks_score_one() {
        let m = BinaryMask::from_fn(20, 10, |x, y| x > 3 && y > 2 && x < 12);
        let r = mask_metrics(&m, &m).unwrap();
        for v in [r.dsc, r.jsi, r.acc, r.sens, r.spec] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn disjoint_halves_score_zero() {
        let r = mask_metrics(&halves(true), &halves(false)).unwrap();
        for v in [r.dsc, r.acc, r.sens, r.spec] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn half_overlap() {
        let gt = BinaryMask::from_fn(40, 40, |x, y| x < 10 && y < 10);
        let pred = BinaryMask::from_fn(40, 40, |x, y| x >= 5 && x < 15 && y < 10);
        let r = mask_metrics(&pred, &gt).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (50, 50, 50));
        assert_eq!(r.dsc, 0.5);
        assert!((r.jsi - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.total(), 1600);
    }

    #[test]
    fn empty_class_conventions() {
        let empty = BinaryMask::new(5, 5);
        let r = mask_metrics(&empty, &empty).unwrap();
        assert_eq!((r.dsc, r.jsi, r.sens, r.spec), (1.0, 1.0, 1.0, 1.0));
        let some = BinaryMask::from_fn(5, 5, |x, _| x == 0);
        let r = mask_metrics(&some, &empty).unwrap();
        assert_eq!((r.dsc, r.jsi, r.sens), (0.0, 0.0, 0.0));
        let full = BinaryMask::full(5, 5);
        assert_eq!(mask_metrics(&full, &full).unwrap().spec, 1.0);
        assert_eq!(mask_metrics(&some, &full).unwrap().spec, 0.0);
    }

    #[test]
    fn size_mismatch() {
        assert!(mask_metrics(&BinaryMask::new(3, 3), &BinaryMask::new(3, 4)).is_err());
    }

    #[test]
    fn auc_trivial_cases() {
        let gt = BinaryMask::from_fn(30, 20, |x, y| (x + y) % 3 == 0);
        assert_eq!(roc_auc(&gt.to_plane(), &gt).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&Plane::filled(30, 20, 0.3), &gt).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&gt.to_plane().map(|v| 1.0 - v), &gt).unwrap().auc, 0.0);
        assert!(roc_auc(&Plane::filled(30, 20, 0.3), &BinaryMask::new(30, 20)).is_err());
    }

    #[test]
    fn roc_endpoints_and_monotone() {
        let gt = BinaryMask::from_fn(16, 16, |x, _| x < 6);
        let s = Plane::from_fn(16, 16, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let c = roc_auc(&s, &gt).unwrap();
        assert_eq!(c.points[0], (0.0, 0.0));
        assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        assert!(c.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn batch_means() {
        let m = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        let one = batch_evaluate(&[EvalPair { id: "a".into(), pred: m.clone(), gt: m.clone() }]).unwrap();
        assert_eq!(one.mean.dsc, one.rows[0].1.dsc);
        let two = batch_evaluate(&[
            EvalPair { id: "a".into(), pred: m.clone(), gt: m.clone() },
            EvalPair { id: "b".into(), pred: m.complement(), gt: m.clone() },
        ])
        .unwrap();
        assert_eq!(two.mean.dsc, 0.5);
        let mut csv = Vec::new();
        two.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().starts_with("mean,0.5,"));
        assert!(batch_evaluate(&[]).is_err());
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(any::<bool>(), 48).prop_map(|v| BinaryMask::from_vec(8, 6, v))
    }

    proptest! {
        #[test]
        fn dice_jaccard_identity(a in mask_strategy(), b in mask_strategy()) {
            let r = mask_metrics(&a, &b).unwrap();
            prop_assert!((r.dsc - 2.0 * r.jsi / (1.0 + r.jsi)).abs() < 1e-12);
            let s = mask_metrics(&b, &a).unwrap();
            prop_assert_eq!((r.dsc, r.jsi), (s.dsc, s.jsi));
            // swapping roles exchanges fp and fn
            prop_assert_eq!((r.tp, r.fp, r.fn_), (s.tp, s.fn_, s.fp));
        }

        #[test]
        fn auc_monotone_invariant(v in proptest::collection::vec(0.0f64..1.0, 48), g in mask_strategy()) {
            prop_assume!(!g.is_empty() && !g.is_full());
            let s = Plane::from_vec(8, 6, v);
            let a = roc_auc(&s, &g).unwrap().auc;
            let b = roc_auc(&s.map(|x| (3.0 * x).exp() - 2.0), &g).unwrap().auc;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
