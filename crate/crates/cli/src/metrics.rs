use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use satneuro_core::configspace::PayloadConfig;
use satneuro_core::traffic::DemandVector;

use crate::svg::{line_chart, Series};
use crate::{Error, Result};

/// One-vs-rest ROC points `(fpr, tpr)` from a sweep over the distinct scores,
/// highest first. Starts at (0, 0) and ends at (1, 1). `None` when either
/// class is absent.
pub fn roc_curve(positive: &[bool], scores: &[f64]) -> Option<Vec<(f64, f64)>> {
    assert_eq!(positive.len(), scores.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Some(points)
}

/// Trapezoid-rule area under a polyline sorted by x.
pub fn auc_trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Quadratic; meant as a reference.
pub fn auc_pairwise(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| p).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| !p).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// First index of the largest score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Length { expected: labels.len(), got: predictions.len() });
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&l, &p) in labels.iter().zip(predictions) {
            if l >= classes || p >= classes {
                return Err(Error::Invalid(format!("class {} out of range for {classes} classes", l.max(p))));
            }
            counts[l][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total().max(1) as f64
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the class has no positives or no negatives.
    pub auc: Option<f64>,
    pub roc: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub capacity_gap_bps: Option<f64>,
    pub latency_s: Option<f64>,
    /// Synops (SNN) or MACs (CNN) per example.
    pub ops_per_example: Option<f64>,
}

/// Accuracy, per-class precision/recall/F1, confusion matrix and one-vs-rest
/// ROC/AUC. Predictions are the first maximum of each score row.
pub fn classification_report(labels: &[usize], scores: &[Vec<f64>], classes: usize) -> Result<MetricsReport> {
    if labels.len() != scores.len() {
        return Err(Error::Length { expected: labels.len(), got: scores.len() });
    }
    if labels.is_empty() {
        return Err(Error::Invalid("no examples to report on".into()));
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes) {
        return Err(Error::Length { expected: classes, got: row.len() });
    }
    let predictions: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let confusion = ConfusionMatrix::new(labels, &predictions, classes)?;
    let class_metrics = (0..classes)
        .map(|k| {
            let tp = confusion.counts[k][k] as f64;
            let support: usize = confusion.counts[k].iter().sum();
            let predicted: usize = confusion.counts.iter().map(|r| r[k]).sum();
            let precision = ratio(tp, predicted as f64);
            let recall = ratio(tp, support as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            let positive: Vec<bool> = labels.iter().map(|&l| l == k).collect();
            let column: Vec<f64> = scores.iter().map(|s| s[k]).collect();
            let roc = roc_curve(&positive, &column);
            let auc = roc.as_deref().map(auc_trapezoid);
            ClassMetrics { class: k, support, precision, recall, f1, auc, roc }
        })
        .collect();
    Ok(MetricsReport {
        accuracy: confusion.accuracy(),
        classes: class_metrics,
        confusion,
        capacity_gap_bps: None,
        latency_s: None,
        ops_per_example: None,
    })
}

/// Mean absolute difference between demanded and offered capacity over all
/// beams and samples, in bps.
pub fn capacity_gap(demands: &[DemandVector], predicted: &[&PayloadConfig]) -> Result<f64> {
    if demands.len() != predicted.len() {
        return Err(Error::Length { expected: demands.len(), got: predicted.len() });
    }
    if demands.is_empty() {
        return Err(Error::Invalid("capacity gap needs at least one sample".into()));
    }
    let mut total = 0.0;
    let mut terms = 0usize;
    for (d, cfg) in demands.iter().zip(predicted) {
        if d.len() != cfg.num_beams() {
            return Err(Error::Length { expected: cfg.num_beams(), got: d.len() });
        }
        for (c, y) in d.as_slice().iter().zip(cfg.capacities_bps()) {
            total += (c - y).abs();
            terms += 1;
        }
    }
    Ok(total / terms as f64)
}

/// Writes `report.csv`, `confusion.csv`, `roc_<class>.csv`, `roc.svg` and
/// `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record(["class", "support", "precision", "recall", "f1", "auc"])?;
    for c in &report.classes {
        w.write_record([
            c.class.to_string(),
            c.support.to_string(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            c.auc.map_or_else(|| "absent".to_string(), |a| a.to_string()),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("confusion.csv"))?;
    let z = report.confusion.counts.len();
    let mut header = vec!["true\\pred".to_string()];
    header.extend((0..z).map(|k| k.to_string()));
    w.write_record(&header)?;
    for (k, row) in report.confusion.counts.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut series = Vec::new();
    for c in &report.classes {
        let Some(roc) = &c.roc else { continue };
        let mut w = csv::Writer::from_path(dir.join(format!("roc_{}.csv", c.class)))?;
        w.write_record(["fpr", "tpr"])?;
        for (x, y) in roc {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush()?;
        series.push(Series { name: format!("class {}", c.class), points: roc.clone() });
    }
    let svg = line_chart("One-vs-rest ROC", "false positive rate", "true positive rate", &series);
    std::fs::File::create(dir.join("roc.svg"))?.write_all(svg.as_bytes())?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use satneuro_core::linkbudget::CapacityTable;

    #[test]
    fn perfect_scores() {
        let labels = [0, 1, 2, 1, 0];
        let scores: Vec<Vec<f64>> =
            labels.iter().map(|&l| (0..3).map(|k| f64::from(u8::from(k == l))).collect()).collect();
        let r = classification_report(&labels, &scores, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for c in &r.classes {
            assert_eq!(c.f1, 1.0);
            assert_eq!(c.auc, Some(1.0));
        }
    }

    #[test]
    fn absent_class_has_no_auc_and_zero_f1() {
        let r = classification_report(&[0, 0, 1], &[vec![0.9, 0.1, 0.0], vec![0.8, 0.2, 0.0], vec![0.4, 0.6, 0.0]], 3)
            .unwrap();
        assert_eq!(r.classes[2].auc, None);
        assert_eq!(r.classes[2].f1, 0.0);
        assert_eq!(r.classes[2].support, 0);
    }

    #[test]
    fn confusion_rows_sum_to_support() {
        let labels = [0, 1, 1, 2, 2, 2];
        let preds = [0, 2, 1, 2, 0, 2];
        let m = ConfusionMatrix::new(&labels, &preds, 3).unwrap();
        let rows: Vec<usize> = m.counts.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![1, 2, 3]);
        assert_eq!(m.trace(), 4);
        assert!(ConfusionMatrix::new(&[0], &[3], 3).is_err());
    }

    #[test]
    fn tied_scores_count_half() {
        let pos = [true, false];
        let s = [0.5, 0.5];
        assert_eq!(auc_pairwise(&pos, &s), Some(0.5));
        assert_eq!(auc_trapezoid(&roc_curve(&pos, &s).unwrap()), 0.5);
    }

    #[test]
    fn capacity_gap_hand_example() {
        let t = CapacityTable::reference();
        let cfg = PayloadConfig::from_options(&[0, 0], &t).unwrap();
        let g = capacity_gap(&[DemandVector(vec![400e6, 400e6])], &[&cfg]).unwrap();
        assert!((g - 71.6312e6).abs() <= 1e-6 * 71.6312e6);
        let exact = DemandVector(cfg.capacities_bps().collect());
        assert_eq!(capacity_gap(&[exact], &[&cfg]).unwrap(), 0.0);
        assert!(capacity_gap(&[], &[&cfg]).is_err());
        assert!(capacity_gap(&[DemandVector(vec![1.0])], &[&cfg]).is_err());
    }

    #[test]
    fn report_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let r = classification_report(&[0, 1, 1], &[vec![0.7, 0.3], vec![0.2, 0.8], vec![0.6, 0.4]], 2).unwrap();
        write_report(dir.path(), &r).unwrap();
        for f in ["report.csv", "confusion.csv", "roc_0.csv", "roc_1.csv", "roc.svg", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
