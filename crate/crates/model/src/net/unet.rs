use serde::{Deserialize, Serialize};
use swinseg_tensor::{Graph, NamedParameterSet, Var};

use crate::error::{ModelError, Result};
use crate::layout::{conv, BindVisitor, Bindings, ConvLayout, Init, InitVisitor, ParamVisitor};
use crate::net::Segmenter;

/// Classical convolutional U-Net used as the comparison baseline:
/// conv-pool encoder, nearest-neighbour upsampling decoder, concatenated
/// skips, 1x1 classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetBaselineConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub classes: usize,
}

impl UNetBaselineConfig {
    pub fn desk() -> Self {
        UNetBaselineConfig { input_h: 64, input_w: 64, base_channels: 16, depth: 4, classes: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(ModelError::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.depth == 0 || self.base_channels == 0 {
            return Err(ModelError::Config("depth and base_channels must be positive".to_string()));
        }
        let div = 1usize << self.depth;
        if self.input_h % div != 0 || self.input_w % div != 0 {
            return Err(ModelError::Config(format!(
                "input {}x{} must be divisible by 2^{}",
                self.input_h, self.input_w, self.depth
            )));
        }
        Ok(())
    }

    fn level_channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

pub struct UnetDecoderLayout<H> {
    pub up: ConvLayout<H>,
    pub conv1: ConvLayout<H>,
    pub conv2: ConvLayout<H>,
}

pub struct UnetLayout<H> {
    pub encoder: Vec<[ConvLayout<H>; 2]>,
    pub bottom: [ConvLayout<H>; 2],
    /// Deepest level first.
    pub decoder: Vec<UnetDecoderLayout<H>>,
    pub head: ConvLayout<H>,
}

pub fn unet_layout<V: ParamVisitor>(v: &mut V, cfg: &UNetBaselineConfig) -> Result<UnetLayout<V::Handle>> {
    cfg.validate()?;
    let kaiming = |cin: usize| Init::KaimingConv { fan_in: 9 * cin };
    let mut encoder = Vec::new();
    for l in 0..cfg.depth {
        let cin = if l == 0 { 3 } else { cfg.level_channels(l - 1) };
        let c = cfg.level_channels(l);
        encoder.push([
            conv(v, &format!("encoder.level{l}.conv1"), 3, 3, cin, c, kaiming(cin))?,
            conv(v, &format!("encoder.level{l}.conv2"), 3, 3, c, c, kaiming(c))?,
        ]);
    }
    let cb = cfg.level_channels(cfg.depth);
    let c_last = cfg.level_channels(cfg.depth - 1);
    let bottom = [
        conv(v, "bottom.conv1", 3, 3, c_last, cb, kaiming(c_last))?,
        conv(v, "bottom.conv2", 3, 3, cb, cb, kaiming(cb))?,
    ];
    let mut decoder = Vec::new();
    for l in (0..cfg.depth).rev() {
        let c = cfg.level_channels(l);
        let c_above = if l == cfg.depth - 1 { cb } else { cfg.level_channels(l + 1) };
        let j = cfg.depth - 1 - l;
        decoder.push(UnetDecoderLayout {
            up: conv(v, &format!("decoder.level{j}.up"), 3, 3, c_above, c, kaiming(c_above))?,
            conv1: conv(v, &format!("decoder.level{j}.conv1"), 3, 3, 2 * c, c, kaiming(2 * c))?,
            conv2: conv(v, &format!("decoder.level{j}.conv2"), 3, 3, c, c, kaiming(c))?,
        });
    }
    let head = conv(v, "head", 1, 1, cfg.base_channels, cfg.classes, Init::Normal(0.02))?;
    Ok(UnetLayout { encoder, bottom, decoder, head })
}

pub fn init_unet(cfg: &UNetBaselineConfig, seed: u64) -> Result<NamedParameterSet> {
    let mut v = InitVisitor::new(seed);
    unet_layout(&mut v, cfg)?;
    Ok(v.out)
}

pub fn bind_unet<'g>(
    g: &'g mut Graph,
    cfg: &UNetBaselineConfig,
    params: &NamedParameterSet,
) -> Result<(UnetLayout<Var>, Bindings)> {
    let mut v = BindVisitor::new(g, params);
    let layout = unet_layout(&mut v, cfg)?;
    let bindings = v.finish()?;
    Ok((layout, bindings))
}

fn conv_relu(g: &mut Graph, x: Var, c: &ConvLayout<Var>) -> Result<Var> {
    let y = g.conv2d(x, c.weight, Some(c.bias), 1, 1)?;
    Ok(g.relu(y)?)
}

pub fn forward_unet(g: &mut Graph, cfg: &UNetBaselineConfig, layout: &UnetLayout<Var>, image: Var) -> Result<Var> {
    let sh = g.shape(image).to_vec();
    if sh.len() != 4 || sh[1] != cfg.input_h || sh[2] != cfg.input_w || sh[3] != 3 {
        return Err(ModelError::Config(format!(
            "input {:?} does not match configured [B, {}, {}, 3]",
            sh, cfg.input_h, cfg.input_w
        )));
    }
    let mut x = image;
    let mut skips = Vec::with_capacity(cfg.depth);
    for level in &layout.encoder {
        x = conv_relu(g, x, &level[0])?;
        x = conv_relu(g, x, &level[1])?;
        skips.push(x);
        x = g.max_pool2(x)?;
    }
    x = conv_relu(g, x, &layout.bottom[0])?;
    x = conv_relu(g, x, &layout.bottom[1])?;
    for (j, dec) in layout.decoder.iter().enumerate() {
        x = g.upsample_nearest2(x)?;
        x = conv_relu(g, x, &dec.up)?;
        let skip = skips[cfg.depth - 1 - j];
        let rank = g.shape(x).len();
        x = g.concat(&[x, skip], rank - 1)?;
        x = conv_relu(g, x, &dec.conv1)?;
        x = conv_relu(g, x, &dec.conv2)?;
    }
    Ok(g.conv2d(x, layout.head.weight, Some(layout.head.bias), 1, 0)?)
}

/// [`Segmenter`] wrapper for the trainer.
pub struct UnetModel(pub UNetBaselineConfig);

impl Segmenter for UnetModel {
    fn name(&self) -> &'static str {
        "unet-baseline"
    }

    fn classes(&self) -> usize {
        self.0.classes
    }

    fn input_hw(&self) -> (usize, usize) {
        (self.0.input_h, self.0.input_w)
    }

    fn init_params(&self, seed: u64) -> Result<NamedParameterSet> {
        init_unet(&self.0, seed)
    }

    fn forward(&self, g: &mut Graph, params: &NamedParameterSet, image: Var) -> Result<(Var, Bindings)> {
        let (layout, bindings) = bind_unet(g, &self.0, params)?;
        let logits = forward_unet(g, &self.0, &layout, image)?;
        Ok((logits, bindings))
    }
}
