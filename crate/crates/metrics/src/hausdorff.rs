use crate::{MetricsError, Result};

/// Integer pixel coordinates `(row, col)` of one class region.
pub type PointSet = Vec<(usize, usize)>;

/// Pixels of `mask` carrying `label`, in row-major order.
pub fn point_set(mask: &[u8], width: usize, label: u8) -> PointSet {
    mask.iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
        .map(|(i, _)| (i / width, i % width))
        .collect()
}

fn dist2(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dy = a.0 as f64 - b.0 as f64;
    let dx = a.1 as f64 - b.1 as f64;
    dy * dy + dx * dx
}

/// `h(A, B) = max_{a in A} min_{b in B} ||a - b||`. The inner scan stops
/// early once a point's running minimum cannot raise the current maximum.
pub fn directed_hausdorff(a: &PointSet, b: &PointSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut max2 = 0.0f64;
    for &pa in a {
        let mut min2 = f64::INFINITY;
        for &pb in b {
            let d2 = dist2(pa, pb);
            if d2 < min2 {
                min2 = d2;
                if min2 <= max2 {
                    break;
                }
            }
        }
        if min2 > max2 {
            max2 = min2;
        }
    }
    Ok(max2.sqrt())
}

/// Symmetric Hausdorff distance `H(A, B) = max(h(A, B), h(B, A))`.
/// Conventions: both sets empty scores 0; exactly one empty scores the
/// image diagonal `sqrt((H-1)^2 + (W-1)^2)`.
pub fn hausdorff(a: &PointSet, b: &PointSet, image_hw: (usize, usize)) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => {
            let (h, w) = image_hw;
            ((h as f64 - 1.0).powi(2) + (w as f64 - 1.0).powi(2)).sqrt()
        }
        (false, false) => {
            let ab = directed_hausdorff(a, b).expect("both non-empty");
            let ba = directed_hausdorff(b, a).expect("both non-empty");
            ab.max(ba)
        }
    }
}
