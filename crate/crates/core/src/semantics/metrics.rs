use rustc_hash::FxHashMap;

use super::{ClassRemap, LabelSet, SemanticsError};

/// Rows are ground-truth classes, columns predictions, both over the
/// evaluation subset. One extra column collects predictions outside the
/// subset; they count as false negatives of the true class only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<u16>,
    ignore: Option<u16>,
    index: FxHashMap<u16, usize>,
    counts: Vec<u64>,
}

/// Per-class IoU and their mean, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<(u16, f64)>,
    pub miou: f64,
}

impl ConfusionMatrix {
    pub fn new(labels: &LabelSet) -> Self {
        Self::with_classes(labels.eval_ids(), labels.ignore())
    }

    pub fn with_classes(classes: &[u16], ignore: Option<u16>) -> Self {
        let n = classes.len();
        Self {
            classes: classes.to_vec(),
            ignore,
            index: classes.iter().enumerate().map(|(i, &c)| (c, i)).collect(),
            counts: vec![0; n * (n + 1)],
        }
    }

    pub fn classes(&self) -> &[u16] {
        &self.classes
    }

    fn cols(&self) -> usize {
        self.classes.len() + 1
    }

    /// Entry for ground truth `gt` and prediction `pred`; `None` for the
    /// column of out-of-subset predictions.
    pub fn get(&self, gt: u16, pred: Option<u16>) -> u64 {
        let Some(&r) = self.index.get(&gt) else {
            return 0;
        };
        let c = match pred {
            Some(p) => match self.index.get(&p) {
                Some(&c) => c,
                None => return 0,
            },
            None => self.classes.len(),
        };
        self.counts[r * self.cols() + c]
    }

    pub fn add(&mut self, gt: u16, pred: u16) {
        if Some(gt) == self.ignore {
            return;
        }
        let Some(&r) = self.index.get(&gt) else {
            return;
        };
        let c = self.index.get(&pred).copied().unwrap_or(self.classes.len());
        let cols = self.cols();
        self.counts[r * cols + c] += 1;
    }

    pub fn accumulate(&mut self, gt: &[u16], pred: &[u16]) -> Result<(), SemanticsError> {
        if gt.len() != pred.len() {
            return Err(SemanticsError::LengthMismatch {
                truth: gt.len(),
                predicted: pred.len(),
            });
        }
        for (&g, &p) in gt.iter().zip(pred) {
            self.add(g, p);
        }
        Ok(())
    }

    /// Entrywise sum. Both matrices must score the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), SemanticsError> {
        if self.classes != other.classes {
            return Err(SemanticsError::InvalidLabelSet("merging matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, i: usize) -> u64 {
        self.counts[i * self.cols() + i]
    }

    pub fn false_positives(&self, i: usize) -> u64 {
        let cols = self.cols();
        (0..self.classes.len()).map(|r| self.counts[r * cols + i]).sum::<u64>() - self.true_positives(i)
    }

    pub fn false_negatives(&self, i: usize) -> u64 {
        let cols = self.cols();
        self.counts[i * cols..(i + 1) * cols].iter().sum::<u64>() - self.true_positives(i)
    }

    /// Collapses rows and columns through `remap` onto the subset of
    /// `target`. Exact when `remap` sends scored classes to scored classes
    /// and unscored ids to unscored ids.
    pub fn remapped(&self, remap: &ClassRemap, target: &LabelSet) -> ConfusionMatrix {
        let mut out = ConfusionMatrix::new(target);
        let cols = self.cols();
        let n = self.classes.len();
        for (r, &gt) in self.classes.iter().enumerate() {
            let g = remap.apply(gt);
            if Some(g) == out.ignore {
                continue;
            }
            let Some(&rr) = out.index.get(&g) else {
                continue;
            };
            for c in 0..cols {
                let v = self.counts[r * cols + c];
                if v == 0 {
                    continue;
                }
                let cc = if c == n {
                    out.classes.len()
                } else {
                    out.index.get(&remap.apply(self.classes[c])).copied().unwrap_or(out.classes.len())
                };
                let oc = out.cols();
                out.counts[rr * oc + cc] += v;
            }
        }
        out
    }
}

/// IoU per scored class, `TP / (TP + FP + FN)` or 0 when nothing was seen,
/// and their unweighted mean in percent.
pub fn mean_iou(cm: &ConfusionMatrix) -> IouReport {
    let per_class: Vec<(u16, f64)> = cm
        .classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let tp = cm.true_positives(i);
            let denom = tp + cm.false_positives(i) + cm.false_negatives(i);
            let iou = if denom == 0 { 0.0 } else { tp as f64 / denom as f64 };
            (c, iou)
        })
        .collect();
    let miou = if per_class.is_empty() {
        0.0
    } else {
        100.0 * per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64
    };
    IouReport { per_class, miou }
}
