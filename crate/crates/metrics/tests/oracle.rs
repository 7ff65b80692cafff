//! Brute-force oracle agreement on randomized masks: per-pixel counting for
//! the region metrics (exact) and the O(|A|*|B|) double loop for Hausdorff
//! (1e-9), plus the Dice / IoU identity on every sample.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use swinseg_metrics::{evaluate, AggregationPolicy, ClassSelection};

const SIDE: usize = 16;
const K: usize = 3;
const PAIRS: usize = 1000;

fn random_mask(rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..SIDE * SIDE).map(|_| (rng.next_u64() % K as u64) as u8).collect()
}

/// Blocky mask so classes are sometimes absent entirely.
fn blocky_mask(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut mask = vec![0u8; SIDE * SIDE];
    let rects = rng.next_u64() % 3;
    for _ in 0..rects {
        let label = (1 + rng.next_u64() % (K as u64 - 1)) as u8;
        let y0 = (rng.next_u64() % SIDE as u64) as usize;
        let x0 = (rng.next_u64() % SIDE as u64) as usize;
        let hh = 1 + (rng.next_u64() % 6) as usize;
        let ww = 1 + (rng.next_u64() % 6) as usize;
        for y in y0..(y0 + hh).min(SIDE) {
            for x in x0..(x0 + ww).min(SIDE) {
                mask[y * SIDE + x] = label;
            }
        }
    }
    mask
}

struct OracleCounts {
    tp: u64,
    fp: u64,
    tn: u64,
    fn_: u64,
}

fn oracle_counts(pred: &[u8], gt: &[u8], k: u8) -> OracleCounts {
    let mut c = OracleCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for i in 0..pred.len() {
        let p = pred[i] == k;
        let g = gt[i] == k;
        if p && g {
            c.tp += 1;
        } else if p {
            c.fp += 1;
        } else if g {
            c.fn_ += 1;
        } else {
            c.tn += 1;
        }
    }
    c
}

fn oracle_hausdorff(pred: &[u8], gt: &[u8], k: u8) -> f64 {
    let points = |mask: &[u8]| -> Vec<(f64, f64)> {
        mask.iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| ((i / SIDE) as f64, (i % SIDE) as f64))
            .collect()
    };
    let a = points(pred);
    let b = points(gt);
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => {
            let d = (SIDE - 1) as f64;
            (2.0 * d * d).sqrt()
        }
        _ => {
            let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> f64 {
                from.iter()
                    .map(|&(ya, xa)| {
                        to.iter()
                            .map(|&(yb, xb)| ((ya - yb).powi(2) + (xa - xb).powi(2)).sqrt())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0f64, f64::max)
            };
            directed(&a, &b).max(directed(&b, &a))
        }
    }
}

#[test]
fn one_thousand_random_pairs_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let policy = AggregationPolicy::default();
    for pair in 0..PAIRS {
        let (pred, gt) = if pair % 2 == 0 {
            (random_mask(&mut rng), random_mask(&mut rng))
        } else {
            (blocky_mask(&mut rng), blocky_mask(&mut rng))
        };
        let report = evaluate(&pred, &gt, (SIDE, SIDE), K, policy).unwrap();

        for k in 0..K {
            let oc = oracle_counts(&pred, &gt, k as u8);
            let m = &report.per_class[k];

            let dice_oracle = if oc.fp + 2 * oc.tp + oc.fn_ == 0 {
                1.0
            } else {
                2.0 * oc.tp as f64 / (oc.fp + 2 * oc.tp + oc.fn_) as f64
            };
            let mpa_oracle = (oc.tp + oc.tn) as f64 / (oc.tp + oc.tn + oc.fp + oc.fn_) as f64;
            let miou_oracle = if oc.fn_ + oc.tp + oc.fp == 0 {
                1.0
            } else {
                oc.tp as f64 / (oc.fn_ + oc.tp + oc.fp) as f64
            };
            assert_eq!(m.dice, dice_oracle, "dice, pair {pair} class {k}");
            assert_eq!(m.mpa, mpa_oracle, "mpa, pair {pair} class {k}");
            assert_eq!(m.miou, miou_oracle, "miou, pair {pair} class {k}");

            let hd_oracle = oracle_hausdorff(&pred, &gt, k as u8);
            assert!(
                (m.hausdorff - hd_oracle).abs() < 1e-9,
                "hd, pair {pair} class {k}: {} vs {}",
                m.hausdorff,
                hd_oracle
            );

            // per-class identity: Dice = 2 IoU / (1 + IoU)
            let implied = 2.0 * m.miou / (1.0 + m.miou);
            assert!(
                (m.dice - implied).abs() < 1e-12,
                "dice/iou identity, pair {pair} class {k}: {} vs {}",
                m.dice,
                implied
            );

            assert!((0.0..=1.0).contains(&m.dice));
            assert!((0.0..=1.0).contains(&m.mpa));
            assert!((0.0..=1.0).contains(&m.miou));
            assert!(m.hausdorff >= 0.0);
        }

        // macro values follow the policy
        let fg_dice = (report.per_class[1].dice + report.per_class[2].dice) / 2.0;
        assert_eq!(report.dice, fg_dice);
        let all_mpa: f64 = report.per_class.iter().map(|c| c.mpa).sum::<f64>() / K as f64;
        assert_eq!(report.mpa, all_mpa);
    }
}

#[test]
fn pooled_and_per_slice_policies_are_both_available() {
    let pred = vec![0u8; SIDE * SIDE];
    let gt = vec![0u8; SIDE * SIDE];
    let all = AggregationPolicy { dice: ClassSelection::AllClasses, accuracy: ClassSelection::AllClasses };
    let r = evaluate(&pred, &gt, (SIDE, SIDE), K, all).unwrap();
    assert_eq!(r.dice, 1.0);
}
