use std::rc::Rc;

use swinseg_tensor::{Graph, Tensor, TensorError, Var};

use crate::error::Result;

/// Additive attention penalty for cross-region pairs in shifted windows.
pub const MASK_NEG: f64 = -1e9;

fn check_divisible(h: usize, w: usize, m: usize) -> Result<()> {
    if m == 0 || h % m != 0 || w % m != 0 {
        return Err(TensorError::Dim {
            op: "window_partition",
            msg: format!("window {} must divide spatial extents {}x{}", m, h, w),
        }
        .into());
    }
    Ok(())
}

/// `[B, H, W, C] -> [B*(H/M)*(W/M), M*M, C]`, windows enumerated row-major.
pub fn window_partition(g: &mut Graph, x: Var, m: usize) -> Result<Var> {
    let sh = g.shape(x).to_vec();
    let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
    check_divisible(h, w, m)?;
    let (nh, nw) = (h / m, w / m);
    let mut idx = Vec::with_capacity(b * h * w * c);
    for bi in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                for iy in 0..m {
                    for ix in 0..m {
                        let src = ((bi * h + wy * m + iy) * w + wx * m + ix) * c;
                        for ci in 0..c {
                            idx.push((src + ci) as u32);
                        }
                    }
                }
            }
        }
    }
    Ok(g.gather(x, Rc::new(idx), vec![b * nh * nw, m * m, c])?)
}

/// Inverse of [`window_partition`] for feature maps of extent `h` x `w`.
pub fn window_reverse(g: &mut Graph, windows: Var, h: usize, w: usize) -> Result<Var> {
    let sh = g.shape(windows).to_vec();
    let (nwin, t, c) = (sh[0], sh[1], sh[2]);
    let m = (t as f64).sqrt() as usize;
    if m * m != t {
        return Err(TensorError::Dim {
            op: "window_reverse",
            msg: format!("window holds {} patches, not a square", t),
        }
        .into());
    }
    check_divisible(h, w, m)?;
    let (nh, nw) = (h / m, w / m);
    if nh * nw == 0 || nwin % (nh * nw) != 0 {
        return Err(TensorError::Dim {
            op: "window_reverse",
            msg: format!("{} windows do not tile {}x{} with M={}", nwin, h, w, m),
        }
        .into());
    }
    let b = nwin / (nh * nw);
    let mut idx = Vec::with_capacity(b * h * w * c);
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let win = (bi * nh + y / m) * nw + x / m;
                let patch = (y % m) * m + x % m;
                let src = (win * t + patch) * c;
                for ci in 0..c {
                    idx.push((src + ci) as u32);
                }
            }
        }
    }
    Ok(g.gather(windows, Rc::new(idx), vec![b, h, w, c])?)
}

/// Additive attention mask for shifted windows: `[nWindows, M*M, M*M]` with
/// 0 where two patches come from the same pre-shift region and [`MASK_NEG`]
/// where they do not. With `shift == 0` the mask is all zero.
pub fn attention_mask(h: usize, w: usize, m: usize, shift: usize) -> Result<Tensor> {
    check_divisible(h, w, m)?;
    let (nh, nw) = (h / m, w / m);
    let nwin = nh * nw;
    let t = m * m;
    if shift == 0 {
        return Ok(Tensor::zeros(&[nwin, t, t]));
    }
    if shift >= m {
        return Err(TensorError::Dim {
            op: "attention_mask",
            msg: format!("shift {} must be smaller than window {}", shift, m),
        }
        .into());
    }
    // label the canvas with up to nine pre-shift regions, in the shifted frame
    let mut region = vec![0i32; h * w];
    let bands = |extent: usize| [0..extent - m, extent - m..extent - shift, extent - shift..extent];
    let mut label = 0i32;
    for hb in bands(h) {
        for wb in bands(w) {
            for y in hb.clone() {
                for x in wb.clone() {
                    region[y * w + x] = label;
                }
            }
            label += 1;
        }
    }
    let mut data = vec![0.0; nwin * t * t];
    for wy in 0..nh {
        for wx in 0..nw {
            let win = wy * nw + wx;
            let patch_region = |p: usize| region[(wy * m + p / m) * w + wx * m + p % m];
            for i in 0..t {
                for j in 0..t {
                    if patch_region(i) != patch_region(j) {
                        data[(win * t + i) * t + j] = MASK_NEG;
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![nwin, t, t], data)?)
}
