use serde::{Deserialize, Serialize};
use swinseg_tensor::{Graph, NamedParameterSet, Var};

use crate::error::{ModelError, Result};
use crate::layout::{
    block_pair, conv, linear, norm, BindVisitor, Bindings, BlockPairLayout, ExpandLayout, Init,
    InitVisitor, LinearLayout, MergeLayout, NormLayout, ParamVisitor, PatchEmbedLayout,
};
use crate::net::Segmenter;
use crate::swin::{
    final_patch_expanding_x4, patch_embed, patch_expanding, patch_merging, skip_fuse,
    swin_block_pair, BlockContext,
};

/// U-shaped shifted-window transformer configuration.
///
/// `desk()` is the small configuration every experiment runs at;
/// `paper_faithful()` is the 224-pixel backbone-scale variant kept behind
/// the same record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwinUnetConfig {
    pub input_h: usize,
    pub input_w: usize,
    /// Embedding channels after patch partition.
    pub embed_dim: usize,
    /// Encoder stages before the bottleneck.
    pub encoder_stages: usize,
    /// Attention heads per resolution, `encoder_stages + 1` entries.
    pub heads: Vec<usize>,
    /// Window side in patches.
    pub window: usize,
    /// Output classes.
    pub classes: usize,
    /// Learned relative position bias on/off.
    pub rel_bias: bool,
}

impl SwinUnetConfig {
    pub fn desk() -> Self {
        SwinUnetConfig {
            input_h: 64,
            input_w: 64,
            embed_dim: 48,
            encoder_stages: 3,
            heads: vec![3, 6, 12, 24],
            window: 4,
            classes: 3,
            rel_bias: true,
        }
    }

    pub fn paper_faithful() -> Self {
        SwinUnetConfig {
            input_h: 224,
            input_w: 224,
            embed_dim: 96,
            encoder_stages: 3,
            heads: vec![3, 6, 12, 24],
            window: 7,
            classes: 3,
            rel_bias: true,
        }
    }

    /// Geometry of every attention resolution: `encoder_stages` entries plus
    /// the bottleneck. The window clamps to the feature extent when a stage
    /// is too small to tile, and the shift turns off once a single window
    /// covers the whole map.
    pub fn stage_plans(&self) -> Vec<StagePlan> {
        (0..=self.encoder_stages)
            .map(|i| {
                let h = (self.input_h / 4) >> i;
                let w = (self.input_w / 4) >> i;
                let window = self.window.min(h).min(w);
                let shift = if h > window || w > window { window / 2 } else { 0 };
                StagePlan { h, w, dim: self.embed_dim << i, heads: self.heads.get(i).copied().unwrap_or(1), window, shift }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.heads.len() != self.encoder_stages + 1 {
            return fail(format!(
                "{} head counts for {} stages plus bottleneck",
                self.heads.len(),
                self.encoder_stages
            ));
        }
        if self.input_h % 4 != 0 || self.input_w % 4 != 0 {
            return fail(format!("input {}x{} must be divisible by 4", self.input_h, self.input_w));
        }
        if self.window == 0 || self.embed_dim == 0 || self.encoder_stages == 0 {
            return fail("window, embed_dim and encoder_stages must be positive".to_string());
        }
        for (i, plan) in self.stage_plans().iter().enumerate() {
            if plan.h == 0 || plan.w == 0 {
                return fail(format!("stage {} has empty extents", i));
            }
            if plan.h % plan.window != 0 || plan.w % plan.window != 0 {
                return fail(format!(
                    "stage {} extents {}x{} not tiled by window {}",
                    i, plan.h, plan.w, plan.window
                ));
            }
            if plan.dim % plan.heads != 0 {
                return fail(format!("stage {} channels {} not divisible by {} heads", i, plan.dim, plan.heads));
            }
        }
        Ok(())
    }
}

/// Spatial extent, channels and attention geometry of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StagePlan {
    pub h: usize,
    pub w: usize,
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
}

impl StagePlan {
    fn block_context(&self) -> BlockContext {
        BlockContext { h: self.h, w: self.w, window: self.window, shift: self.shift, heads: self.heads }
    }
}

pub struct EncoderStageLayout<H> {
    pub blocks: BlockPairLayout<H>,
    pub merge: MergeLayout<H>,
}

pub struct DecoderStageLayout<H> {
    pub expand: ExpandLayout<H>,
    pub fuse: LinearLayout<H>,
    pub blocks: BlockPairLayout<H>,
}

pub struct SwinUnetLayout<H> {
    pub patch_embed: PatchEmbedLayout<H>,
    pub encoder: Vec<EncoderStageLayout<H>>,
    pub bottleneck: BlockPairLayout<H>,
    pub decoder: Vec<DecoderStageLayout<H>>,
    pub final_expand: LinearLayout<H>,
    /// Normalizes the pixel-resolution features before the classifier.
    pub final_norm: NormLayout<H>,
    pub head: LinearLayout<H>,
}

/// Single walk defining every parameter. Encoder-side names live under
/// `patch_embed.` and `encoder.` (the transfer-learning scope); the
/// bottleneck belongs to the encoder.
pub fn swin_unet_layout<V: ParamVisitor>(v: &mut V, cfg: &SwinUnetConfig) -> Result<SwinUnetLayout<V::Handle>> {
    cfg.validate()?;
    let plans = cfg.stage_plans();
    let embed = PatchEmbedLayout {
        proj: conv(v, "patch_embed.proj", 4, 4, 3, cfg.embed_dim, Init::Normal(0.02))?,
        norm: norm(v, "patch_embed.norm", cfg.embed_dim)?,
    };
    let mut encoder = Vec::new();
    for (i, plan) in plans[..cfg.encoder_stages].iter().enumerate() {
        let prefix = format!("encoder.stage{i}");
        let blocks = block_pair(v, &prefix, plan.dim, plan.heads, plan.window, cfg.rel_bias)?;
        let merge = MergeLayout {
            norm: norm(v, &format!("{prefix}.merge.norm"), 4 * plan.dim)?,
            reduce: linear(v, &format!("{prefix}.merge.reduce"), 4 * plan.dim, 2 * plan.dim, false)?,
        };
        encoder.push(EncoderStageLayout { blocks, merge });
    }
    let bplan = plans[cfg.encoder_stages];
    let bottleneck = block_pair(v, "encoder.bottleneck", bplan.dim, bplan.heads, bplan.window, cfg.rel_bias)?;

    let mut decoder = Vec::new();
    for j in 0..cfg.encoder_stages {
        // decoder stage j lands on the geometry of encoder stage (stages-1-j)
        let plan = plans[cfg.encoder_stages - 1 - j];
        let prefix = format!("decoder.stage{j}");
        let expand = ExpandLayout {
            expand: linear(v, &format!("{prefix}.expand"), 2 * plan.dim, 4 * plan.dim, false)?,
            norm: norm(v, &format!("{prefix}.expand_norm"), plan.dim)?,
        };
        let fuse = linear(v, &format!("{prefix}.fuse"), 2 * plan.dim, plan.dim, true)?;
        let blocks = block_pair(v, &prefix, plan.dim, plan.heads, plan.window, cfg.rel_bias)?;
        decoder.push(DecoderStageLayout { expand, fuse, blocks });
    }
    let final_expand = linear(v, "final_expand", cfg.embed_dim, 16 * cfg.embed_dim, false)?;
    let final_norm = norm(v, "final_norm", cfg.embed_dim)?;
    let head = linear(v, "head", cfg.embed_dim, cfg.classes, true)?;
    Ok(SwinUnetLayout { patch_embed: embed, encoder, bottleneck, decoder, final_expand, final_norm, head })
}

/// Fresh parameters for the configuration, deterministic in `seed`.
pub fn init_swin_unet(cfg: &SwinUnetConfig, seed: u64) -> Result<NamedParameterSet> {
    let mut v = InitVisitor::new(seed);
    swin_unet_layout(&mut v, cfg)?;
    Ok(v.out)
}

/// Binds `params` onto `g`, checking names and shapes both ways.
pub fn bind_swin_unet<'g>(
    g: &'g mut Graph,
    cfg: &SwinUnetConfig,
    params: &NamedParameterSet,
) -> Result<(SwinUnetLayout<Var>, Bindings)> {
    let mut v = BindVisitor::new(g, params);
    let layout = swin_unet_layout(&mut v, cfg)?;
    let bindings = v.finish()?;
    Ok((layout, bindings))
}

/// Encoder stages with down-sampling, the bottleneck pair, decoder stages
/// with up-sampling and skip fusion, the final 4x expansion and the
/// per-pixel classifier.
pub fn forward_swin_unet(
    g: &mut Graph,
    cfg: &SwinUnetConfig,
    layout: &SwinUnetLayout<Var>,
    image: Var,
) -> Result<Var> {
    let sh = g.shape(image).to_vec();
    if sh.len() != 4 || sh[1] != cfg.input_h || sh[2] != cfg.input_w || sh[3] != 3 {
        return Err(ModelError::Config(format!(
            "input {:?} does not match configured [B, {}, {}, 3]",
            sh, cfg.input_h, cfg.input_w
        )));
    }
    let plans = cfg.stage_plans();
    let mut x = patch_embed(g, image, &layout.patch_embed)?;
    let mut skips = Vec::with_capacity(cfg.encoder_stages);
    for (stage, plan) in layout.encoder.iter().zip(&plans) {
        x = swin_block_pair(g, x, &stage.blocks, &plan.block_context())?;
        skips.push(x);
        x = patch_merging(g, x, &stage.merge)?;
    }
    x = swin_block_pair(g, x, &layout.bottleneck, &plans[cfg.encoder_stages].block_context())?;
    for (j, stage) in layout.decoder.iter().enumerate() {
        let plan = plans[cfg.encoder_stages - 1 - j];
        x = patch_expanding(g, x, &stage.expand)?;
        x = skip_fuse(g, x, skips[cfg.encoder_stages - 1 - j], &stage.fuse)?;
        x = swin_block_pair(g, x, &stage.blocks, &plan.block_context())?;
    }
    x = final_patch_expanding_x4(g, x, &layout.final_expand)?;
    x = crate::layout::apply_norm(g, x, &layout.final_norm)?;
    Ok(g.linear(x, layout.head.weight, layout.head.bias)?)
}

/// [`Segmenter`] wrapper for the trainer.
pub struct SwinUnetModel(pub SwinUnetConfig);

impl Segmenter for SwinUnetModel {
    fn name(&self) -> &'static str {
        "swin-unet"
    }

    fn classes(&self) -> usize {
        self.0.classes
    }

    fn input_hw(&self) -> (usize, usize) {
        (self.0.input_h, self.0.input_w)
    }

    fn init_params(&self, seed: u64) -> Result<NamedParameterSet> {
        init_swin_unet(&self.0, seed)
    }

    fn forward(&self, g: &mut Graph, params: &NamedParameterSet, image: Var) -> Result<(Var, Bindings)> {
        let (layout, bindings) = bind_swin_unet(g, &self.0, params)?;
        let logits = forward_swin_unet(g, &self.0, &layout, image)?;
        Ok((logits, bindings))
    }
}
