use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swinseg_metrics::{evaluate, AggregationPolicy, MetricsReport};
use swinseg_model::{
    init_transfer, load_checkpoint, save_checkpoint, NamedParameterSet, Segmenter, SwinUnetModel,
    TransferScope,
};
use swinseg_tensor::rng::SeededRng;
use swinseg_tensor::{adamw_step, Graph, OptimizerState};

use crate::config::{TrainConfig, TransferMode};
use crate::data::{load_dataset, LoadedSlice};
use crate::error::{io_err, AppError, Result};

/// Hyperparameters of one optimization run.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

fn sample_loss_and_grads(
    model: &dyn Segmenter,
    params: &NamedParameterSet,
    slice: &LoadedSlice,
) -> Result<(f64, NamedParameterSet)> {
    let mut g = Graph::new();
    let input = g.leaf(slice.input.clone(), false)?;
    let (logits, bindings) = model.forward(&mut g, params, input)?;
    let loss = g.cross_entropy(logits, Rc::new(slice.labels.clone()))?;
    g.backward(loss)?;
    let mut grads = NamedParameterSet::new();
    for (name, var) in bindings {
        let grad = g
            .grad_tensor(var)
            .unwrap_or_else(|| swinseg_tensor::Tensor::zeros(g.shape(var)));
        grads.insert(name, grad)?;
    }
    Ok((g.value(loss)[0], grads))
}

/// A non-finite value produced anywhere inside a training step means the
/// optimization blew up; report it as divergence in that epoch.
fn divergence_or(e: AppError, epoch: usize) -> AppError {
    use swinseg_model::ModelError;
    use swinseg_tensor::TensorError;
    match &e {
        AppError::Tensor(TensorError::NonFinite { .. })
        | AppError::Model(ModelError::Tensor(TensorError::NonFinite { .. })) => {
            AppError::Divergence { epoch }
        }
        _ => e,
    }
}

fn accumulate(mut acc: NamedParameterSet, other: &NamedParameterSet) -> NamedParameterSet {
    for ((_, dst), (_, src)) in acc.iter_mut().zip(other.iter()) {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d += s;
        }
    }
    acc
}

/// Mini-batch gradient descent with AdamW. Batches are drawn in a
/// seed-derived shuffle per epoch (last partial batch kept); the per-sample
/// passes run in parallel and are averaged in index order, so the whole fit
/// is bit-deterministic for a fixed `(model, data, options)`.
pub fn fit(
    model: &dyn Segmenter,
    mut params: NamedParameterSet,
    train: &[LoadedSlice],
    opts: &FitOptions,
) -> Result<(NamedParameterSet, Vec<f64>)> {
    let mut optimizer = OptimizerState::new(opts.learning_rate, opts.weight_decay)?;
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        SeededRng::derive(opts.seed, 0x9a0c_0000 + epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let results: Vec<(f64, NamedParameterSet)> = batch
                .par_iter()
                .map(|&i| sample_loss_and_grads(model, &params, &train[i]))
                .collect::<Result<_>>()
                .map_err(|e| divergence_or(e, epoch))?;
            let scale = 1.0 / batch.len() as f64;
            let mut iter = results.into_iter();
            let (loss0, grads0) = iter.next().expect("batches are non-empty");
            let mut batch_loss = loss0;
            let mut grads = grads0;
            for (loss, g) in iter {
                batch_loss += loss;
                grads = accumulate(grads, &g);
            }
            for (_, t) in grads.iter_mut() {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            loss_sum += batch_loss;
            if !batch_loss.is_finite() {
                return Err(AppError::Divergence { epoch });
            }
            adamw_step(&mut params, &grads, &mut optimizer)?;
        }
        let epoch_loss = loss_sum / train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(AppError::Divergence { epoch });
        }
        epoch_losses.push(epoch_loss);
    }
    Ok((params, epoch_losses))
}

/// Per-pixel argmax of `[1, H, W, K]` logits.
pub fn argmax_mask(logits: &[f64], classes: usize) -> Vec<u8> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0usize;
            for k in 1..classes {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

/// Predicted mask for one loaded slice.
pub fn predict_slice(model: &dyn Segmenter, params: &NamedParameterSet, slice: &LoadedSlice) -> Result<Vec<u8>> {
    let mut g = Graph::new();
    let input = g.leaf(slice.input.clone(), false)?;
    let (logits, _) = model.forward(&mut g, params, input)?;
    Ok(argmax_mask(g.value(logits), model.classes()))
}

/// Per-slice evaluation averaged over the split (data-parallel with a fixed
/// aggregation order).
pub fn evaluate_model(
    model: &dyn Segmenter,
    params: &NamedParameterSet,
    slices: &[LoadedSlice],
    policy: AggregationPolicy,
) -> Result<MetricsReport> {
    let reports: Vec<MetricsReport> = slices
        .par_iter()
        .map(|s| {
            let pred = predict_slice(model, params, s)?;
            Ok(evaluate(&pred, &s.labels, (s.h, s.w), model.classes(), policy)?)
        })
        .collect::<Result<_>>()?;
    Ok(MetricsReport::mean(&reports))
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub model: String,
    pub seed: u64,
    pub epoch_losses: Vec<f64>,
    pub metrics: MetricsReport,
    pub wall_secs: f64,
    pub config: TrainConfig,
}

pub struct TrainOutcome {
    pub params: NamedParameterSet,
    pub log: RunLog,
    pub checkpoint: PathBuf,
}

/// Trains the configured transformer network end to end: dataset from the
/// manifest, optional encoder transfer, AdamW epochs, final weights
/// quantized to the checkpoint precision, then evaluated on the test split.
/// Writes `<model>.ckpt` and `runlog.json` under `out_dir`.
pub fn train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    let pretrained = match (&cfg.transfer, &cfg.pretrained) {
        (TransferMode::None, _) => None,
        (TransferMode::Encoder, Some(path)) => Some(load_checkpoint(path)?),
        (TransferMode::Encoder, None) => {
            return Err(AppError::Config(
                "transfer mode 'encoder' needs a pretrained checkpoint path".to_string(),
            ))
        }
    };
    train_with_pretrained(cfg, out_dir, pretrained.as_ref())
}

/// [`train`] with an in-memory pretrained set (the transfer experiment path).
pub fn train_with_pretrained(
    cfg: &TrainConfig,
    out_dir: &Path,
    pretrained: Option<&NamedParameterSet>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = SwinUnetModel(cfg.model.clone());
    train_model(cfg, out_dir, &model, pretrained)
}

/// Model-generic core shared with the baseline comparison.
pub fn train_model(
    cfg: &TrainConfig,
    out_dir: &Path,
    model: &dyn Segmenter,
    pretrained: Option<&NamedParameterSet>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let (train_slices, test_slices) =
        load_dataset(&cfg.manifest, cfg.channel_mode, cfg.train_center, cfg.test_center)?;
    let (h, w) = model.input_hw();
    for s in train_slices.iter().chain(&test_slices) {
        if (s.h, s.w) != (h, w) {
            return Err(AppError::Config(format!(
                "slice {} is {}x{} but the model expects {}x{}",
                s.id, s.h, s.w, h, w
            )));
        }
    }

    let mut params = model.init_params(cfg.seed)?;
    if let Some(pre) = pretrained {
        init_transfer(&mut params, pre, TransferScope::EncoderOnly)?;
    }

    let opts = FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        seed: cfg.seed,
    };
    let (mut params, epoch_losses) = fit(model, params, &train_slices, &opts)?;

    // checkpoints store f32; quantizing first keeps the saved model and the
    // in-memory one bit-identical
    params.quantize_f32();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let checkpoint = out_dir.join(format!("{}.ckpt", model.name()));
    save_checkpoint(&params, &checkpoint)?;

    let metrics = evaluate_model(model, &params, &test_slices, cfg.policy)?;
    let log = RunLog {
        model: model.name().to_string(),
        seed: cfg.seed,
        epoch_losses,
        metrics,
        wall_secs: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    let log_path = out_dir.join("runlog.json");
    let json = serde_json::to_string_pretty(&log)
        .map_err(|e| AppError::Data(format!("runlog serialization: {e}")))?;
    std::fs::write(&log_path, json).map_err(io_err(&log_path))?;
    Ok(TrainOutcome { params, log, checkpoint })
}
