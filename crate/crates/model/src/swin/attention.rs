use std::rc::Rc;

use swinseg_tensor::{Graph, Tensor, TensorError, Var};

use crate::error::Result;
use crate::layout::{apply_linear, AttentionLayout};

/// Per-call attention geometry.
#[derive(Debug, Clone, Copy)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Window side in patches; the token count per window is `window^2`.
    pub window: usize,
    /// Windows per image, so the mask can broadcast over the batch.
    pub windows_per_image: usize,
}

/// Row of the `(2M-1)^2` relative-position-bias table for each ordered
/// token pair `(i, j)` of an `M x M` window.
pub fn rel_position_index(m: usize) -> Vec<usize> {
    let t = m * m;
    let span = 2 * m - 1;
    let mut idx = Vec::with_capacity(t * t);
    for i in 0..t {
        let (yi, xi) = (i / m, i % m);
        for j in 0..t {
            let (yj, xj) = (j / m, j % m);
            let dy = yi + m - 1 - yj;
            let dx = xi + m - 1 - xj;
            idx.push(dy * span + dx);
        }
    }
    idx
}

/// Multi-head self-attention within windows:
/// `softmax(Q K^T / sqrt(d) + rel_bias + mask) V`, heads concatenated and
/// output-projected. Returns the transformed windows and the post-softmax
/// attention probabilities `[B, windows_per_image, heads, T, T]`.
pub fn window_attention(
    g: &mut Graph,
    windows: Var,
    p: &AttentionLayout<Var>,
    cfg: &AttentionConfig,
    mask: Option<&Tensor>,
) -> Result<(Var, Var)> {
    let sh = g.shape(windows).to_vec();
    if sh.len() != 3 {
        return Err(TensorError::Dim {
            op: "window_attention",
            msg: format!("expected [windows, tokens, channels], got {:?}", sh),
        }
        .into());
    }
    let (nw, t, c) = (sh[0], sh[1], sh[2]);
    let heads = cfg.heads;
    if c % heads != 0 {
        return Err(TensorError::Dim {
            op: "window_attention",
            msg: format!("channels {} not divisible by {} heads", c, heads),
        }
        .into());
    }
    if t != cfg.window * cfg.window || cfg.windows_per_image == 0 || nw % cfg.windows_per_image != 0 {
        return Err(TensorError::Dim {
            op: "window_attention",
            msg: format!(
                "{} windows of {} tokens inconsistent with window {} / {} per image",
                nw, t, cfg.window, cfg.windows_per_image
            ),
        }
        .into());
    }
    let d = c / heads;
    let b = nw / cfg.windows_per_image;

    let split_heads = |g: &mut Graph, x: Var| -> Result<Var> {
        let r = g.reshape(x, vec![nw, t, heads, d])?;
        Ok(g.permute(r, &[0, 2, 1, 3])?) // [nw, heads, t, d]
    };

    let q = apply_linear(g, windows, &p.wq)?;
    let k = apply_linear(g, windows, &p.wk)?;
    let v = apply_linear(g, windows, &p.wv)?;
    let q = split_heads(g, q)?;
    let k = split_heads(g, k)?;
    let v = split_heads(g, v)?;

    let kt = g.permute(k, &[0, 1, 3, 2])?; // [nw, heads, d, t]
    let logits = g.bmm(q, kt)?; // [nw, heads, t, t]
    let logits = g.scale(logits, 1.0 / (d as f64).sqrt())?;
    let mut logits = g.reshape(logits, vec![b, cfg.windows_per_image, heads, t, t])?;

    if let Some(table) = p.rel_bias {
        let rows = rel_position_index(cfg.window);
        let mut idx = Vec::with_capacity(t * t * heads);
        for h in 0..heads {
            for &r in &rows {
                idx.push((r * heads + h) as u32);
            }
        }
        let bias = g.gather(table, Rc::new(idx), vec![1, 1, heads, t, t])?;
        logits = g.add_bcast(logits, bias)?;
    }
    if let Some(mask) = mask {
        if mask.shape() != [cfg.windows_per_image, t, t] {
            return Err(TensorError::Dim {
                op: "window_attention",
                msg: format!(
                    "mask shape {:?}, expected [{}, {}, {}]",
                    mask.shape(),
                    cfg.windows_per_image,
                    t,
                    t
                ),
            }
            .into());
        }
        let mv = g.constant(mask.clone())?;
        let mv = g.reshape(mv, vec![1, cfg.windows_per_image, 1, t, t])?;
        logits = g.add_bcast(logits, mv)?;
    }

    let probs = g.softmax(logits, 4)?;
    let probs_flat = g.reshape(probs, vec![nw, heads, t, t])?;
    let ctx = g.bmm(probs_flat, v)?; // [nw, heads, t, d]
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, vec![nw, t, c])?;
    let out = apply_linear(g, ctx, &p.wo)?;
    Ok((out, probs))
}
