use swinseg_tensor::{Graph, Tensor, Var};

use crate::error::Result;
use crate::layout::{apply_linear, apply_norm, BlockLayout, BlockPairLayout};
use crate::swin::attention::{window_attention, AttentionConfig};
use crate::swin::window::{attention_mask, window_partition, window_reverse};

/// Geometry for one transformer block application.
#[derive(Debug, Clone)]
pub struct BlockContext {
    pub h: usize,
    pub w: usize,
    pub window: usize,
    /// 0 for W-MSA, `window / 2` for SW-MSA.
    pub shift: usize,
    pub heads: usize,
}

impl BlockContext {
    fn mask(&self) -> Result<Option<Tensor>> {
        if self.shift == 0 {
            Ok(None)
        } else {
            Ok(Some(attention_mask(self.h, self.w, self.window, self.shift)?))
        }
    }
}

/// One transformer block: attention over (optionally shifted) windows with a
/// residual link, then a LayerNorm + 4x MLP with a second residual link.
pub fn swin_block(g: &mut Graph, x: Var, p: &BlockLayout<Var>, ctx: &BlockContext) -> Result<Var> {
    let shortcut = x;
    let xn = apply_norm(g, x, &p.norm1)?;
    let shifted = if ctx.shift > 0 {
        g.cyclic_shift(xn, -(ctx.shift as i64), -(ctx.shift as i64))?
    } else {
        xn
    };
    let windows = window_partition(g, shifted, ctx.window)?;
    let mask = ctx.mask()?;
    let attn_cfg = AttentionConfig {
        heads: ctx.heads,
        window: ctx.window,
        windows_per_image: (ctx.h / ctx.window) * (ctx.w / ctx.window),
    };
    let (attended, _probs) = window_attention(g, windows, &p.attn, &attn_cfg, mask.as_ref())?;
    let merged = window_reverse(g, attended, ctx.h, ctx.w)?;
    let unshifted = if ctx.shift > 0 {
        g.cyclic_shift(merged, ctx.shift as i64, ctx.shift as i64)?
    } else {
        merged
    };
    let z = g.add(shortcut, unshifted)?;

    let zn = apply_norm(g, z, &p.norm2)?;
    let hidden = apply_linear(g, zn, &p.mlp.fc1)?;
    let hidden = g.gelu(hidden)?;
    let mlp_out = apply_linear(g, hidden, &p.mlp.fc2)?;
    Ok(g.add(z, mlp_out)?)
}

/// The W-MSA / SW-MSA pair: the first block runs unshifted, the second with
/// the context's shift.
pub fn swin_block_pair(g: &mut Graph, x: Var, p: &BlockPairLayout<Var>, ctx: &BlockContext) -> Result<Var> {
    let unshifted = BlockContext { shift: 0, ..ctx.clone() };
    let y = swin_block(g, x, &p.first, &unshifted)?;
    swin_block(g, y, &p.second, ctx)
}
