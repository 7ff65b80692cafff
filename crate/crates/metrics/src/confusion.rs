use crate::{MetricsError, Result};

/// One-vs-rest pixel tallies for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Per-class confusion counts over a prediction/ground-truth mask pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
}

impl ConfusionCounts {
    pub fn classes(&self) -> usize {
        self.per_class.len()
    }
}

/// Counts TP/FP/TN/FN for every class. Labels must lie in `0..classes`.
pub fn confusion(pred: &[u8], gt: &[u8], classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch(pred.len(), gt.len()));
    }
    for &l in pred.iter().chain(gt) {
        if l as usize >= classes {
            return Err(MetricsError::InvalidLabel { label: l as usize, classes });
        }
    }
    let mut per_class = vec![ClassCounts::default(); classes];
    for (&p, &g) in pred.iter().zip(gt) {
        for (k, c) in per_class.iter_mut().enumerate() {
            let k = k as u8;
            match (p == k, g == k) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts { per_class })
}

/// `2 TP / (FP + 2 TP + FN)`; a class absent from both masks scores 1.
pub fn dice(c: &ClassCounts) -> f64 {
    let denom = c.fp + 2 * c.tp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

/// Per-class pixel accuracy `(TP + TN) / (FN + TP + FP + TN)`.
pub fn mpa(c: &ClassCounts) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

/// `TP / (FN + TP + FP)`; a class absent from both masks scores 1.
pub fn miou(c: &ClassCounts) -> f64 {
    let denom = c.fn_ + c.tp + c.fp;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}
