use std::rc::Rc;

use swinseg_tensor::{Graph, TensorError, Var};

use crate::error::Result;
use crate::layout::{apply_linear, apply_norm, ExpandLayout, LinearLayout, MergeLayout, PatchEmbedLayout};

/// Patch partition plus linear embedding, fused as a 4x4 stride-4
/// convolution from 3 to `C` channels, followed by LayerNorm.
pub fn patch_embed(g: &mut Graph, image: Var, p: &PatchEmbedLayout<Var>) -> Result<Var> {
    let sh = g.shape(image).to_vec();
    if sh.len() != 4 || sh[1] % 4 != 0 || sh[2] % 4 != 0 {
        return Err(TensorError::Dim {
            op: "patch_embed",
            msg: format!("spatial extents of {:?} must be divisible by 4", sh),
        }
        .into());
    }
    let x = g.conv2d(image, p.proj.weight, Some(p.proj.bias), 4, 0)?;
    apply_norm(g, x, &p.norm)
}

/// Gather map moving each 2x2 patch neighbourhood into channels:
/// `[B, H, W, C] -> [B, H/2, W/2, 4C]` with channel blocks ordered
/// top-left, bottom-left, top-right, bottom-right.
pub fn space_to_channels_indices(b: usize, h: usize, w: usize, c: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(b * h * w * c);
    for bi in 0..b {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                for group in 0..4 {
                    let (dy, dx) = (group % 2, group / 2);
                    let src = ((bi * h + 2 * oy + dy) * w + 2 * ox + dx) * c;
                    for ci in 0..c {
                        idx.push((src + ci) as u32);
                    }
                }
            }
        }
    }
    idx
}

/// Gather map scattering channel groups back into an `r x r` spatial
/// neighbourhood: `[B, H, W, C] -> [B, rH, rW, C/r^2]`, the exact inverse of
/// [`space_to_channels_indices`] when `r == 2`.
pub fn channels_to_space_indices(b: usize, h: usize, w: usize, c: usize, r: usize) -> Vec<u32> {
    let cg = c / (r * r);
    let mut idx = Vec::with_capacity(b * h * w * c);
    for bi in 0..b {
        for y in 0..r * h {
            for x in 0..r * w {
                let (sy, dy) = (y / r, y % r);
                let (sx, dx) = (x / r, x % r);
                let group = dx * r + dy;
                let src = ((bi * h + sy) * w + sx) * c + group * cg;
                for ci in 0..cg {
                    idx.push((src + ci) as u32);
                }
            }
        }
    }
    idx
}

/// Down-sampling: gather 2x2 neighbourhoods into 4C channels, LayerNorm,
/// then a linear reduction 4C -> 2C.
pub fn patch_merging(g: &mut Graph, x: Var, p: &MergeLayout<Var>) -> Result<Var> {
    let sh = g.shape(x).to_vec();
    let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::Dim {
            op: "patch_merging",
            msg: format!("spatial extents of {:?} must be even", sh),
        }
        .into());
    }
    let idx = space_to_channels_indices(b, h, w, c);
    let gathered = g.gather(x, Rc::new(idx), vec![b, h / 2, w / 2, 4 * c])?;
    let normed = apply_norm(g, gathered, &p.norm)?;
    apply_linear(g, normed, &p.reduce)
}

/// Up-sampling: linear C -> 2C, rearrange the 2C channels into a 2x2
/// spatial neighbourhood of C/2 channels, then LayerNorm.
pub fn patch_expanding(g: &mut Graph, x: Var, p: &ExpandLayout<Var>) -> Result<Var> {
    let sh = g.shape(x).to_vec();
    let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
    if c % 2 != 0 {
        return Err(TensorError::Dim {
            op: "patch_expanding",
            msg: format!("channel extent {} must be even", c),
        }
        .into());
    }
    let expanded = apply_linear(g, x, &p.expand)?; // [b, h, w, 2c]
    let idx = channels_to_space_indices(b, h, w, 2 * c, 2);
    let spatial = g.gather(expanded, Rc::new(idx), vec![b, 2 * h, 2 * w, c / 2])?;
    apply_norm(g, spatial, &p.norm)
}

/// Final 4x up-sampling to pixel resolution: linear C -> 16C, rearranged
/// into 4x4 neighbourhoods of C channels.
pub fn final_patch_expanding_x4(g: &mut Graph, x: Var, expand: &LinearLayout<Var>) -> Result<Var> {
    let sh = g.shape(x).to_vec();
    let (b, h, w, c) = (sh[0], sh[1], sh[2], sh[3]);
    let expanded = apply_linear(g, x, expand)?; // [b, h, w, 16c]
    let idx = channels_to_space_indices(b, h, w, 16 * c, 4);
    Ok(g.gather(expanded, Rc::new(idx), vec![b, 4 * h, 4 * w, c])?)
}

/// Skip connection: concatenate decoder and encoder features on channels,
/// then halve back with a linear 2C -> C.
pub fn skip_fuse(g: &mut Graph, decoder: Var, encoder: Var, fuse: &LinearLayout<Var>) -> Result<Var> {
    if g.shape(decoder) != g.shape(encoder) {
        return Err(TensorError::Dim {
            op: "skip_fuse",
            msg: format!("decoder {:?} vs encoder {:?}", g.shape(decoder), g.shape(encoder)),
        }
        .into());
    }
    let rank = g.shape(decoder).len();
    let cat = g.concat(&[decoder, encoder], rank - 1)?;
    apply_linear(g, cat, fuse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_indices_are_a_permutation() {
        let (b, h, w, c) = (2, 4, 6, 3);
        let idx = space_to_channels_indices(b, h, w, c);
        let mut seen = vec![false; b * h * w * c];
        for &i in &idx {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn expand_indices_invert_merge_indices() {
        // gathering with merge indices then expand indices is the identity
        let (b, h, w, c) = (1, 4, 4, 2);
        let merge = space_to_channels_indices(b, h, w, c);
        let expand = channels_to_space_indices(b, h / 2, w / 2, 4 * c, 2);
        for (pos, &e) in expand.iter().enumerate() {
            assert_eq!(merge[e as usize] as usize, pos);
        }
    }

    #[test]
    fn expand_indices_r4_are_a_permutation() {
        let (b, h, w, c) = (1, 2, 3, 16);
        let idx = channels_to_space_indices(b, h, w, c, 4);
        let mut seen = vec![false; b * h * w * c];
        for &i in &idx {
            assert!(!seen[i as usize]);
            seen[i as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn merge_gather_order_is_tl_bl_tr_br() {
        // one 2x2 tile, one channel: values encode position
        let idx = space_to_channels_indices(1, 2, 2, 1);
        // top-left (0,0), bottom-left (1,0), top-right (0,1), bottom-right (1,1)
        assert_eq!(idx, vec![0, 2, 1, 3]);
    }
}
