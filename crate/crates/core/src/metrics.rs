//! Confusion-matrix accumulation and the IoU family of metrics.

use crate::error::{Error, Result};

/// Label value skipped by [`ConfusionMatrix::accumulate`] when ignoring is on.
pub const IGNORE_LABEL: u8 = 255;

/// `C x C` pixel counts; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::ElementCount {
                dims: vec![classes, classes],
                len: counts.len(),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one count per pixel. Pixels whose ground truth equals `ignore`
    /// are skipped.
    pub fn accumulate(&mut self, gt: &[u8], pred: &[u8], ignore: Option<u8>) -> Result<()> {
        if gt.len() != pred.len() {
            return Err(Error::ShapeMismatch {
                op: "accumulate",
                lhs: vec![gt.len()],
                rhs: vec![pred.len()],
            });
        }
        let c = self.classes;
        let check = |l: u8| {
            if (l as usize) < c {
                Ok(l as usize)
            } else {
                Err(Error::LabelOutOfRange { label: l as usize, classes: c })
            }
        };
        // validate first so a failed call leaves the matrix untouched
        for (&g, &p) in gt.iter().zip(pred) {
            if Some(g) == ignore {
                continue;
            }
            check(g)?;
            check(p)?;
        }
        for (&g, &p) in gt.iter().zip(pred) {
            if Some(g) != ignore {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch {
                op: "merge",
                lhs: vec![self.classes],
                rhs: vec![other.classes],
            });
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    /// Predicted as `c` but labelled otherwise.
    pub fn fp(&self, c: usize) -> u64 {
        self.col_sum(c) - self.tp(c)
    }

    /// Labelled `c` but predicted otherwise.
    pub fn fn_(&self, c: usize) -> u64 {
        self.row_sum(c) - self.tp(c)
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c * self.classes..(c + 1) * self.classes].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|r| self.get(r, c)).sum()
    }

    /// `TP / (TP + FP + FN)`; `None` for classes neither labelled nor predicted.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let den = self.row_sum(c) + self.col_sum(c) - self.tp(c);
                (den > 0).then(|| self.tp(c) as f64 / den as f64)
            })
            .collect()
    }

    pub fn precision_per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let col = self.col_sum(c);
                (col > 0).then(|| self.tp(c) as f64 / col as f64)
            })
            .collect()
    }

    pub fn recall_per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let row = self.row_sum(c);
                (row > 0).then(|| self.tp(c) as f64 / row as f64)
            })
            .collect()
    }

    pub fn mean_iou(&self) -> f64 {
        mean_defined(&self.iou_per_class())
    }

    /// IoU weighted by ground-truth class frequency.
    pub fn fw_iou(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        self.iou_per_class()
            .iter()
            .enumerate()
            .filter_map(|(c, iou)| iou.map(|v| self.row_sum(c) as f64 / n as f64 * v))
            .sum()
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        (0..self.classes).map(|c| self.tp(c)).sum::<u64>() as f64 / n as f64
    }

    pub fn mean_precision(&self) -> f64 {
        mean_defined(&self.precision_per_class())
    }

    pub fn mean_recall(&self) -> f64 {
        mean_defined(&self.recall_per_class())
    }

    /// Per-class rows followed by a summary section, as CSV text.
    pub fn report(&self, names: &[&str]) -> Result<String> {
        if names.len() != self.classes {
            return Err(Error::invalid(
                "report",
                format!("{} names for {} classes", names.len(), self.classes),
            ));
        }
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
        w.write_record(REPORT_HEADER).map_err(csv_err)?;
        let (iou, prec, rec) = (self.iou_per_class(), self.precision_per_class(), self.recall_per_class());
        for (c, name) in names.iter().enumerate() {
            w.write_record([
                name.to_string(),
                self.tp(c).to_string(),
                self.fp(c).to_string(),
                self.fn_(c).to_string(),
                fmt(iou[c]),
                fmt(prec[c]),
                fmt(rec[c]),
            ])
            .map_err(csv_err)?;
        }
        w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
        for (key, v) in self.summary() {
            w.write_record([key, &v.to_string()]).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    fn summary(&self) -> [(&'static str, f64); 5] {
        [
            ("miou", self.mean_iou()),
            ("fw_iou", self.fw_iou()),
            ("pixel_accuracy", self.pixel_accuracy()),
            ("mean_precision", self.mean_precision()),
            ("mean_recall", self.mean_recall()),
        ]
    }
}

fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

pub const REPORT_HEADER: [&str; 7] = ["class", "tp", "fp", "fn", "iou", "precision", "recall"];
const SUMMARY_HEADER: [&str; 2] = ["metric", "value"];

/// One per-class row of a parsed report.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub name: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub classes: Vec<ClassRow>,
    pub summary: Vec<(String, f64)>,
}

impl ParsedReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

/// Parses text produced by [`ConfusionMatrix::report`].
pub fn parse_report(text: &str) -> Result<ParsedReport> {
    let bad = |m: String| Error::Data(format!("metrics report: {m}"));
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = r.records();
    let header = rows.next().ok_or_else(|| bad("empty".into()))?.map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad count `{s}`")));
    let opt = |s: &str| {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|_| bad(format!("bad value `{s}`")))
        }
    };
    let mut out = ParsedReport {
        classes: Vec::new(),
        summary: Vec::new(),
    };
    let mut in_summary = false;
    for rec in rows {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if !in_summary && rec.iter().eq(SUMMARY_HEADER) {
            in_summary = true;
            continue;
        }
        if in_summary {
            if rec.len() != 2 {
                return Err(bad(format!("summary row {rec:?}")));
            }
            let v = rec[1].parse::<f64>().map_err(|_| bad(format!("bad value `{}`", &rec[1])))?;
            out.summary.push((rec[0].to_string(), v));
        } else {
            if rec.len() != REPORT_HEADER.len() {
                return Err(bad(format!("class row {rec:?}")));
            }
            out.classes.push(ClassRow {
                name: rec[0].to_string(),
                tp: num(&rec[1])?,
                fp: num(&rec[2])?,
                fn_: num(&rec[3])?,
                iou: opt(&rec[4])?,
                precision: opt(&rec[5])?,
                recall: opt(&rec[6])?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cm(classes: usize, rows: &[u64]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(classes, rows.to_vec()).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 3) as u8).collect();
        let mut m = ConfusionMatrix::new(3);
        m.accumulate(&labels, &labels, None).unwrap();
        assert_eq!((0..3).map(|c| m.tp(c)).sum::<u64>(), 100);
        let mut m = ConfusionMatrix::new(2);
        m.accumulate(&[1], &[0], None).unwrap();
        assert_eq!(m.get(1, 0), 1);
        assert!(matches!(m.accumulate(&[2], &[0], None), Err(Error::LabelOutOfRange { .. })));
        assert_eq!(m.total(), 1);
        m.accumulate(&[IGNORE_LABEL, 0], &[1, 1], Some(IGNORE_LABEL)).unwrap();
        assert_eq!(m.total(), 2);
    }

    #[test]
    fn iou_hand_case() {
        // class 0: TP 3, FP 1, FN 2
        let m = cm(2, &[3, 2, 1, 0]);
        assert_eq!((m.tp(0), m.fp(0), m.fn_(0)), (3, 1, 2));
        assert_eq!(m.iou_per_class()[0], Some(0.5));
    }

    #[test]
    fn two_class_arithmetic() {
        let m = cm(2, &[3, 1, 2, 4]);
        assert_eq!(m.pixel_accuracy(), 0.7);
        let r = m.recall_per_class();
        assert_eq!(r, vec![Some(0.75), Some(4.0 / 6.0)]);
        assert!((m.mean_recall() - 0.708_333_333).abs() < 1e-8);
    }

    #[test]
    fn perfect_and_absent() {
        let m = cm(3, &[5, 0, 0, 0, 0, 0, 0, 0, 7]);
        assert_eq!(m.iou_per_class(), vec![Some(1.0), None, Some(1.0)]);
        for v in [m.mean_iou(), m.fw_iou(), m.pixel_accuracy(), m.mean_precision(), m.mean_recall()] {
            assert_eq!(v, 1.0);
        }
        // labelled but never predicted scores zero
        let m = cm(2, &[1, 1, 0, 0]);
        assert_eq!(m.iou_per_class(), vec![Some(0.5), Some(0.0)]);
        assert_eq!(m.mean_iou(), 0.25);
    }

    #[test]
    fn report_format_and_round_trip() {
        let m = cm(2, &[4, 0, 0, 6]);
        let text = m.report(&["a", "b"]).unwrap();
        assert_eq!(text.lines().next().unwrap(), "class,tp,fp,fn,iou,precision,recall");
        let p = parse_report(&text).unwrap();
        assert_eq!(p.classes.len(), 2);
        assert!(p.classes.iter().all(|r| r.iou == Some(1.0)));
        assert_eq!(p.metric("miou"), Some(1.0));
        assert!(m.report(&["a"]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let counts: Vec<u64> = (0..16).map(|i| if i == 5 { 0 } else { rng.gen_range(0..50) }).collect();
        let mut counts = counts;
        // class 1 absent entirely
        for k in 0..4 {
            counts[4 + k] = 0;
            counts[k * 4 + 1] = 0;
        }
        let m = cm(4, &counts);
        let p = parse_report(&m.report(&["w", "x", "y", "z"]).unwrap()).unwrap();
        for (c, row) in p.classes.iter().enumerate() {
            assert_eq!((row.tp, row.fp, row.fn_), (m.tp(c), m.fp(c), m.fn_(c)));
            assert_eq!(row.iou, m.iou_per_class()[c]);
            assert_eq!(row.precision, m.precision_per_class()[c]);
            assert_eq!(row.recall, m.recall_per_class()[c]);
        }
        assert_eq!(p.classes[1].iou, None);
        assert_eq!(p.metric("fw_iou"), Some(m.fw_iou()));
        assert_eq!(p.metric("mean_recall"), Some(m.mean_recall()));
        assert!(parse_report("nope\n").is_err());
    }

    fn brute(gt: &[u8], pred: &[u8], c: usize) -> Vec<u64> {
        let mut out = vec![0; c * c];
        for g in 0..c {
            for p in 0..c {
                out[g * c + p] = gt.iter().zip(pred).filter(|&(&a, &b)| a as usize == g && b as usize == p).count() as u64;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(c in 1usize..6, pixels in proptest::collection::vec((0u8..6, 0u8..6), 1..200)) {
            let gt: Vec<u8> = pixels.iter().map(|p| p.0 % c as u8).collect();
            let pred: Vec<u8> = pixels.iter().map(|p| p.1 % c as u8).collect();
            let mut m = ConfusionMatrix::new(c);
            let half = gt.len() / 2;
            m.accumulate(&gt[..half], &pred[..half], None).unwrap();
            let mut rest = ConfusionMatrix::new(c);
            rest.accumulate(&gt[half..], &pred[half..], None).unwrap();
            m.merge(&rest).unwrap();
            prop_assert_eq!(m.counts(), &brute(&gt, &pred, c)[..]);
            let ious = m.iou_per_class();
            let (pr, rc) = (m.precision_per_class(), m.recall_per_class());
            for k in 0..c {
                if let (Some(i), Some(p), Some(r)) = (ious[k], pr[k], rc[k]) {
                    prop_assert!(i >= 0.0 && i <= p.min(r) + 1e-15);
                }
            }
        }

        #[test]
        fn class_permutation_invariance(counts in proptest::collection::vec(0u64..30, 9), shift in 1usize..3) {
            let m = cm(3, &counts);
            let perm = |i: usize| (i + shift) % 3;
            let mut pc = vec![0; 9];
            for g in 0..3 {
                for p in 0..3 {
                    pc[perm(g) * 3 + perm(p)] = m.get(g, p);
                }
            }
            let q = cm(3, &pc);
            for (a, b) in [(m.mean_iou(), q.mean_iou()), (m.fw_iou(), q.fw_iou()), (m.pixel_accuracy(), q.pixel_accuracy()),
                           (m.mean_precision(), q.mean_precision()), (m.mean_recall(), q.mean_recall())] {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn equal_frequencies_make_fw_equal_mean(diag in proptest::collection::vec(0u64..10, 3)) {
            // every row sums to 10
            let mut counts = vec![0; 9];
            for c in 0..3 {
                counts[c * 3 + c] = diag[c];
                counts[c * 3 + (c + 1) % 3] = 10 - diag[c];
            }
            let m = cm(3, &counts);
            prop_assert!((m.fw_iou() - m.mean_iou()).abs() < 1e-12);
        }
    }
}
