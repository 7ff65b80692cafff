use swinseg_datagen::{split_halves, LabelImage, SliceRecord};
use swinseg_model::{NamedParameterSet, Segmenter};
use swinseg_tensor::Graph;

use crate::config::ChannelMode;
use crate::data::build_input;
use crate::error::Result;
use crate::train::argmax_mask;

/// Argmax mask for one half-slice record.
pub fn predict_half(
    model: &dyn Segmenter,
    params: &NamedParameterSet,
    half: &SliceRecord,
    mode: ChannelMode,
) -> Result<LabelImage> {
    let input = build_input(half, mode)?;
    let mut g = Graph::new();
    let xv = g.leaf(input, false)?;
    let (logits, _) = model.forward(&mut g, params, xv)?;
    Ok(LabelImage {
        width: half.width(),
        height: half.height(),
        data: argmax_mask(g.value(logits), model.classes()),
    })
}

/// Full-width prediction protocol: split the slice at the midline, run each
/// half through the model, argmax per pixel, and stitch the halves back
/// together. Every pixel is classified exactly once.
pub fn predict_full(
    model: &dyn Segmenter,
    params: &NamedParameterSet,
    record: &SliceRecord,
    mode: ChannelMode,
) -> Result<LabelImage> {
    let (left, right) = split_halves(record)?;
    let left_mask = predict_half(model, params, &left, mode)?;
    let right_mask = predict_half(model, params, &right, mode)?;
    let (h, hw) = (record.height(), record.width() / 2);
    let mut out = LabelImage::new(record.width(), h);
    for y in 0..h {
        let row = y * record.width();
        out.data[row..row + hw].copy_from_slice(&left_mask.data[y * hw..(y + 1) * hw]);
        out.data[row + hw..row + 2 * hw].copy_from_slice(&right_mask.data[y * hw..(y + 1) * hw]);
    }
    Ok(out)
}
