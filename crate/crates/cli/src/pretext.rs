use swinseg_datagen::{generate_slice, split_left_right, CenterProfile, PhantomSpec};
use swinseg_model::{encoder_scope, NamedParameterSet, Segmenter, SwinUnetModel};
use swinseg_tensor::rng::mix_seed;

use crate::config::TrainConfig;
use crate::data::{build_input, LoadedSlice};
use crate::error::Result;
use crate::train::{fit, FitOptions};

/// Builds the pretext phantom distribution in memory: same task shape,
/// disjoint geometry and contrast regime.
pub fn pretext_slices(cfg: &TrainConfig) -> Result<Vec<LoadedSlice>> {
    let (h, w) = (cfg.model.input_h, cfg.model.input_w);
    let spec = PhantomSpec { height: h, width: 2 * w, ..PhantomSpec::pretext() };
    let center = CenterProfile::center1();
    let stream = mix_seed(cfg.seed, 0xbe77e2);
    let mut out = Vec::with_capacity(cfg.pretext.count);
    for i in 0..cfg.pretext.count {
        let record = generate_slice(&spec, &center, mix_seed(stream, i as u64))?;
        let (kept, _) = split_left_right(&record)?;
        let input = build_input(&kept, cfg.channel_mode)?;
        out.push(LoadedSlice {
            id: i as u32,
            center: center.id,
            input,
            labels: kept.label.data.clone(),
            h: kept.height(),
            w: kept.width(),
        });
    }
    Ok(out)
}

/// Short training run on the pretext distribution; returns the
/// encoder-scoped parameters (quantized like any checkpoint) plus the loss
/// history.
pub fn pretrain_pretext(cfg: &TrainConfig) -> Result<(NamedParameterSet, Vec<f64>)> {
    cfg.validate()?;
    let slices = pretext_slices(cfg)?;
    let model = SwinUnetModel(cfg.model.clone());
    let params = model.init_params(mix_seed(cfg.seed, 0xbe77e0))?;
    let opts = FitOptions {
        epochs: cfg.pretext.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        seed: mix_seed(cfg.seed, 0xbe77e1),
    };
    let (mut fitted, losses) = fit(&model, params, &slices, &opts)?;
    fitted.quantize_f32();
    Ok((fitted.subset(encoder_scope), losses))
}
