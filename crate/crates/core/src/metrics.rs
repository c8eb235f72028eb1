//! Classification metrics: confusion matrix (rows = predicted class,
//! columns = actual class), precision/recall/F1, ROC and AUC, plus the
//! bridge that turns detections into per-object classifications.

use serde::{Deserialize, Serialize};

use crate::detector::{iou, Detection, Truth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    /// `counts[predicted][actual]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    /// Predictions per class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Actual instances per class.
    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.n_classes)
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }
}

pub fn confusion(preds: &[usize], actuals: &[usize], n: usize) -> Result<ConfusionMatrix> {
    if preds.len() != actuals.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            preds.len(),
            actuals.len()
        )));
    }
    let mut m = ConfusionMatrix::new(n);
    for (&p, &a) in preds.iter().zip(actuals) {
        if p >= n || a >= n {
            return Err(Error::arg(format!("class index {} ≥ {n}", p.max(a))));
        }
        m.counts[p][a] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (precision * recall) / (precision + recall)
    }
}

pub fn per_class_prf(matrix: &ConfusionMatrix, class: usize) -> ClassScores {
    let tp = matrix.counts[class][class];
    let predicted: u64 = matrix.counts[class].iter().sum();
    let actual: u64 = matrix.counts.iter().map(|r| r[class]).sum();
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    ClassScores {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Descending distinct scores; `points[i + 1]` is the operating point at
    /// `thresholds[i]` (predict positive when score ≥ threshold).
    pub thresholds: Vec<f64>,
}

pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("NaN score"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(threshold);
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    // The lowest threshold admits everything, so the curve already ends at (1, 1).
    debug_assert_eq!(points.last(), Some(&(1.0, 1.0)));
    Ok(RocCurve { points, thresholds })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Predicted class for each truth: the detection with the highest IoU
/// (ties: higher score, then earlier detection) among those with IoU ≥
/// `min_iou`. `None` marks a missed object.
pub fn match_truths(detections: &[Detection], truths: &[Truth], min_iou: f64) -> Vec<Option<usize>> {
    truths
        .iter()
        .map(|t| {
            let mut best: Option<(f64, f64, usize)> = None;
            for d in detections {
                let v = iou(&d.bbox, &t.bbox);
                if v < min_iou {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bv, bs, _)) => v > bv || (v == bv && d.score > bs),
                };
                if better {
                    best = Some((v, d.score, d.class_index));
                }
            }
            best.map(|(_, _, c)| c)
        })
        .collect()
}

/// One ground-truth object as seen by the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectOutcome {
    pub actual: usize,
    pub predicted: Option<usize>,
    /// Best score per class among anchors overlapping the object.
    pub class_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// One-vs-rest ROC per class; `None` when the class has no positives or
    /// no negatives among the evaluated objects.
    pub roc: Vec<Option<RocCurve>>,
    pub auc: Vec<Option<f64>>,
    pub objects: usize,
    pub missed: usize,
}

impl EvalReport {
    pub fn from_outcomes(class_names: &[String], outcomes: &[ObjectOutcome]) -> Result<Self> {
        let n = class_names.len();
        let matched: Vec<&ObjectOutcome> =
            outcomes.iter().filter(|o| o.predicted.is_some()).collect();
        let preds: Vec<usize> = matched.iter().filter_map(|o| o.predicted).collect();
        let actuals: Vec<usize> = matched.iter().map(|o| o.actual).collect();
        let matrix = confusion(&preds, &actuals, n)?;
        let per_class: Vec<ClassScores> = (0..n).map(|c| per_class_prf(&matrix, c)).collect();
        let macro_f1 = if n == 0 {
            0.0
        } else {
            per_class.iter().map(|s| s.f1).sum::<f64>() / n as f64
        };
        let mut curves = Vec::with_capacity(n);
        let mut areas = Vec::with_capacity(n);
        for c in 0..n {
            let scores: Vec<f64> = outcomes.iter().map(|o| o.class_scores[c]).collect();
            let labels: Vec<bool> = outcomes.iter().map(|o| o.actual == c).collect();
            match roc(&scores, &labels) {
                Ok(curve) => {
                    areas.push(Some(auc(&curve)));
                    curves.push(Some(curve));
                }
                Err(Error::Degenerate(_)) => {
                    areas.push(None);
                    curves.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            class_names: class_names.to_vec(),
            accuracy: matrix.accuracy(),
            confusion: matrix,
            per_class,
            macro_f1,
            roc: curves,
            auc: areas,
            objects: outcomes.len(),
            missed: outcomes.len() - matched.len(),
        })
    }

    /// Mean of the defined per-class AUCs.
    pub fn mean_auc(&self) -> Option<f64> {
        let defined: Vec<f64> = self.auc.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    /// Share of objects that found a matching detection.
    pub fn detection_rate(&self) -> f64 {
        if self.objects == 0 {
            0.0
        } else {
            (self.objects - self.missed) as f64 / self.objects as f64
        }
    }
}
