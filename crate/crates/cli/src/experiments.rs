use std::path::Path;

use swinseg_metrics::MetricsReport;
use swinseg_model::swin::{msa_flops, wmsa_flops, ComplexityQuery};
use swinseg_model::{SwinUnetConfig, UnetModel};

use crate::config::{ChannelMode, TrainConfig};
use crate::error::Result;
use crate::pretext::pretrain_pretext;
use crate::table::Table;
use crate::train::{train_model, train_with_pretrained, RunLog, TrainOutcome};

/// Metric rows plus the rendered table of one comparison experiment.
pub struct ExperimentResult {
    pub rows: Vec<(String, MetricsReport)>,
    pub table: Table,
    pub logs: Vec<RunLog>,
}

impl ExperimentResult {
    fn build(title: &str, rows: Vec<(String, MetricsReport)>, logs: Vec<RunLog>) -> Self {
        let table = Table::from_metrics(title, &rows);
        ExperimentResult { rows, table, logs }
    }
}

fn run_named(cfg: &TrainConfig, out_dir: &Path, name: &str) -> Result<TrainOutcome> {
    train_with_pretrained(cfg, &out_dir.join(name), None)
}

/// Channel experiment: the three replicated single-modality runs followed
/// by the stacked multimodal run, all sharing seed and dataset.
pub fn ablate_channels(base: &TrainConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let modes = [
        (ChannelMode::ReplicatedStir, "replicated-stir"),
        (ChannelMode::ReplicatedT1, "replicated-t1"),
        (ChannelMode::ReplicatedT2, "replicated-t2"),
        (ChannelMode::Stacked, "stacked"),
    ];
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for (mode, dir) in modes {
        let cfg = TrainConfig { channel_mode: mode, ..base.clone() };
        let outcome = run_named(&cfg, out_dir, dir)?;
        rows.push((mode.label().to_string(), outcome.log.metrics.clone()));
        logs.push(outcome.log);
    }
    let result = ExperimentResult::build("channel ablation", rows, logs);
    result.table.write(out_dir, "channels")?;
    Ok(result)
}

/// Transfer experiment: random init versus a pretext-pretrained encoder at
/// identical seeds and epochs.
pub fn ablate_transfer(base: &TrainConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let plain = run_named(base, out_dir, "no-transfer")?;
    let (encoder, _pretext_losses) = pretrain_pretext(base)?;
    let transfer =
        train_with_pretrained(base, &out_dir.join("pretext-transfer"), Some(&encoder))?;
    let rows = vec![
        ("random-init".to_string(), plain.log.metrics.clone()),
        ("pretext-transfer".to_string(), transfer.log.metrics.clone()),
    ];
    let result = ExperimentResult::build("transfer ablation", rows, vec![plain.log, transfer.log]);
    result.table.write(out_dir, "transfer")?;
    Ok(result)
}

/// Multicenter experiment: the mixed/random control plus the four
/// center-pure train/test pairings.
pub fn ablate_centers(base: &TrainConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let groups: [(&str, Option<u8>, Option<u8>); 5] = [
        ("train, test: random", None, None),
        ("train: 1, test: 1", Some(1), Some(1)),
        ("train: 1, test: 2", Some(1), Some(2)),
        ("train: 2, test: 1", Some(2), Some(1)),
        ("train: 2, test: 2", Some(2), Some(2)),
    ];
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for (label, train_center, test_center) in groups {
        let cfg = TrainConfig { train_center, test_center, ..base.clone() };
        let dir = label.replace([',', ':'], "").replace(' ', "-");
        let outcome = run_named(&cfg, out_dir, &dir)?;
        rows.push((label.to_string(), outcome.log.metrics.clone()));
        logs.push(outcome.log);
    }
    let result = ExperimentResult::build("multicenter ablation", rows, logs);
    result.table.write(out_dir, "centers")?;
    Ok(result)
}

/// Baseline comparison: the transformer network and the convolutional
/// baseline on identical data and seed.
pub fn compare_baseline(base: &TrainConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let swin = run_named(base, out_dir, "swin-unet")?;
    let unet = UnetModel(base.baseline.clone());
    let unet_outcome = train_model(base, &out_dir.join("unet-baseline"), &unet, None)?;
    let rows = vec![
        ("swin-unet".to_string(), swin.log.metrics.clone()),
        ("unet-baseline".to_string(), unet_outcome.log.metrics.clone()),
    ];
    let result =
        ExperimentResult::build("baseline comparison", rows, vec![swin.log, unet_outcome.log]);
    result.table.write(out_dir, "baseline")?;
    Ok(result)
}

/// Attention cost table: global versus windowed attention per stage.
pub fn complexity_report(cfg: &SwinUnetConfig) -> Table {
    let plans = cfg.stage_plans();
    let mut rows = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        let q = ComplexityQuery { h: plan.h, w: plan.w, c: plan.dim, m: plan.window };
        let msa = msa_flops(&q);
        let wmsa = wmsa_flops(&q);
        let label = if i < cfg.encoder_stages {
            format!("stage{} ({}x{}, C={}, M={})", i, plan.h, plan.w, plan.dim, plan.window)
        } else {
            format!("bottleneck ({}x{}, C={}, M={})", plan.h, plan.w, plan.dim, plan.window)
        };
        rows.push((
            label,
            vec![
                msa.to_string(),
                wmsa.to_string(),
                format!("{:.4}", msa as f64 / wmsa as f64),
            ],
        ));
    }
    Table {
        title: format!("attention complexity, input {}x{}", cfg.input_h, cfg.input_w),
        columns: ["msa_flops", "wmsa_flops", "ratio"].map(String::from).to_vec(),
        rows,
    }
}
