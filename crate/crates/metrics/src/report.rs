use serde::{Deserialize, Serialize};

use crate::confusion::{confusion, dice, miou, mpa};
use crate::hausdorff::{hausdorff, point_set};
use crate::Result;

/// Which classes enter a macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassSelection {
    AllClasses,
    /// Every class except label 0 (background).
    ForegroundOnly,
}

/// Macro-aggregation policy. Dice averages over foreground classes by
/// default; accuracy metrics (MPA, MIoU) include the background class; the
/// Hausdorff distance always averages over foreground classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationPolicy {
    pub dice: ClassSelection,
    pub accuracy: ClassSelection,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        AggregationPolicy { dice: ClassSelection::ForegroundOnly, accuracy: ClassSelection::AllClasses }
    }
}

impl ClassSelection {
    fn mean(&self, values: &[f64]) -> f64 {
        let slice = match self {
            ClassSelection::AllClasses => values,
            ClassSelection::ForegroundOnly => &values[1..],
        };
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub dice: f64,
    pub mpa: f64,
    pub miou: f64,
    pub hausdorff: f64,
}

/// Per-class and macro metric values for one mask pair (or an average over
/// many, see `MetricsReport::mean`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub dice: f64,
    pub mpa: f64,
    pub miou: f64,
    pub hausdorff: f64,
    pub policy: AggregationPolicy,
}

impl MetricsReport {
    /// Elementwise mean over several reports (per-slice averaging).
    pub fn mean(reports: &[MetricsReport]) -> MetricsReport {
        assert!(!reports.is_empty(), "cannot average zero reports");
        let classes = reports[0].per_class.len();
        let n = reports.len() as f64;
        let mut out = MetricsReport {
            per_class: vec![ClassMetrics { dice: 0.0, mpa: 0.0, miou: 0.0, hausdorff: 0.0 }; classes],
            dice: 0.0,
            mpa: 0.0,
            miou: 0.0,
            hausdorff: 0.0,
            policy: reports[0].policy,
        };
        for r in reports {
            assert_eq!(r.per_class.len(), classes);
            for (acc, c) in out.per_class.iter_mut().zip(&r.per_class) {
                acc.dice += c.dice;
                acc.mpa += c.mpa;
                acc.miou += c.miou;
                acc.hausdorff += c.hausdorff;
            }
            out.dice += r.dice;
            out.mpa += r.mpa;
            out.miou += r.miou;
            out.hausdorff += r.hausdorff;
        }
        for c in &mut out.per_class {
            c.dice /= n;
            c.mpa /= n;
            c.miou /= n;
            c.hausdorff /= n;
        }
        out.dice /= n;
        out.mpa /= n;
        out.miou /= n;
        out.hausdorff /= n;
        out
    }

    /// One-row CSV: macro columns then per-class columns.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("dsc,mpa,miou,hd");
        let mut row = format!("{},{},{},{}", self.dice, self.mpa, self.miou, self.hausdorff);
        for (k, c) in self.per_class.iter().enumerate() {
            header.push_str(&format!(",dsc_class{k},mpa_class{k},miou_class{k},hd_class{k}"));
            row.push_str(&format!(",{},{},{},{}", c.dice, c.mpa, c.miou, c.hausdorff));
        }
        format!("{header}\n{row}\n")
    }
}

/// Computes all four metrics for one prediction/ground-truth pair.
/// `image_hw` is the mask extent (rows, cols); `classes` includes the
/// background class 0.
pub fn evaluate(
    pred: &[u8],
    gt: &[u8],
    image_hw: (usize, usize),
    classes: usize,
    policy: AggregationPolicy,
) -> Result<MetricsReport> {
    let counts = confusion(pred, gt, classes)?;
    let (h, w) = image_hw;
    debug_assert_eq!(pred.len(), h * w);
    let mut per_class = Vec::with_capacity(classes);
    for k in 0..classes {
        let c = &counts.per_class[k];
        let pa = point_set(pred, w, k as u8);
        let ga = point_set(gt, w, k as u8);
        per_class.push(ClassMetrics {
            dice: dice(c),
            mpa: mpa(c),
            miou: miou(c),
            hausdorff: hausdorff(&pa, &ga, image_hw),
        });
    }
    let dices: Vec<f64> = per_class.iter().map(|c| c.dice).collect();
    let mpas: Vec<f64> = per_class.iter().map(|c| c.mpa).collect();
    let mious: Vec<f64> = per_class.iter().map(|c| c.miou).collect();
    let hds: Vec<f64> = per_class.iter().map(|c| c.hausdorff).collect();
    Ok(MetricsReport {
        dice: policy.dice.mean(&dices),
        mpa: policy.accuracy.mean(&mpas),
        miou: policy.accuracy.mean(&mious),
        hausdorff: ClassSelection::ForegroundOnly.mean(&hds),
        per_class,
        policy,
    })
}
