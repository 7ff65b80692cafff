//! Trainer contracts on a miniature configuration: the zero-learning-rate
//! no-op, measurable first-epoch progress, bit-identical reruns, the
//! half-split prediction protocol and pretext transfer plumbing.

use std::path::PathBuf;
use std::rc::Rc;

use swinseg_cli::config::{PretextConfig, TrainConfig};
use swinseg_cli::data::{build_input, load_dataset};
use swinseg_cli::predict::{predict_full, predict_half};
use swinseg_cli::pretext::pretrain_pretext;
use swinseg_cli::train::{train, train_with_pretrained};
use swinseg_datagen::{
    generate_slice, make_dataset, read_slice, split_halves, CenterProfile, DataConfig, PhantomSpec,
};
use swinseg_model::{encoder_scope, init_transfer, Segmenter, SwinUnetConfig, SwinUnetModel, TransferScope, UNetBaselineConfig};
use swinseg_tensor::Graph;

fn tiny_model() -> SwinUnetConfig {
    SwinUnetConfig {
        input_h: 16,
        input_w: 16,
        embed_dim: 8,
        encoder_stages: 2,
        heads: vec![2, 4, 8],
        window: 2,
        classes: 3,
        rel_bias: true,
    }
}

fn tiny_setup(dir: &std::path::Path, epochs: usize, lr: f64) -> (TrainConfig, PathBuf) {
    let data_cfg = DataConfig {
        count: 12,
        spec: PhantomSpec { height: 16, width: 32, seed: 5, ..PhantomSpec::default() },
        ..DataConfig::default()
    };
    let data_dir = dir.join("data");
    make_dataset(&data_cfg, 5, &data_dir).unwrap();
    let cfg = TrainConfig {
        model: tiny_model(),
        baseline: UNetBaselineConfig { input_h: 16, input_w: 16, base_channels: 4, depth: 2, classes: 3 },
        epochs,
        batch_size: 4,
        learning_rate: lr,
        seed: 5,
        manifest: data_dir.join("manifest.json"),
        pretext: PretextConfig { count: 8, epochs: 1 },
        ..TrainConfig::default()
    };
    (cfg, data_dir)
}

#[test]
fn zero_learning_rate_training_is_a_parameter_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_setup(dir.path(), 2, 0.0);
    let model = SwinUnetModel(cfg.model.clone());
    let mut init = model.init_params(cfg.seed).unwrap();
    let outcome = train(&cfg, &dir.path().join("run")).unwrap();
    // the trained set is f32-quantized; the fresh init already is
    init.quantize_f32();
    for ((na, ta), (nb, tb)) in init.iter().zip(outcome.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.data(), tb.data(), "lr=0 must leave {} untouched", na);
    }
}

#[test]
fn first_epoch_improves_on_the_untrained_model() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_setup(dir.path(), 1, 1e-3);
    // untrained loss over the training split
    let (train_slices, _) = load_dataset(&cfg.manifest, cfg.channel_mode, None, None).unwrap();
    let model = SwinUnetModel(cfg.model.clone());
    let params = model.init_params(cfg.seed).unwrap();
    let mut untrained = 0.0;
    for s in &train_slices {
        let mut g = Graph::new();
        let xv = g.leaf(s.input.clone(), false).unwrap();
        let (logits, _) = model.forward(&mut g, &params, xv).unwrap();
        let loss = g.cross_entropy(logits, Rc::new(s.labels.clone())).unwrap();
        untrained += g.value(loss)[0];
    }
    untrained /= train_slices.len() as f64;

    let outcome = train(&cfg, &dir.path().join("run")).unwrap();
    assert!(
        outcome.log.epoch_losses[0] < untrained,
        "epoch-1 loss {} should beat the untrained loss {}",
        outcome.log.epoch_losses[0],
        untrained
    );
}

#[test]
fn identical_config_and_seed_give_bit_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_setup(dir.path(), 2, 1e-3);
    let a = train(&cfg, &dir.path().join("a")).unwrap();
    let b = train(&cfg, &dir.path().join("b")).unwrap();
    let bytes_a = std::fs::read(&a.checkpoint).unwrap();
    let bytes_b = std::fs::read(&b.checkpoint).unwrap();
    assert_eq!(bytes_a, bytes_b);
    for (la, lb) in a.log.epoch_losses.iter().zip(&b.log.epoch_losses) {
        assert_eq!(la.to_bits(), lb.to_bits());
    }
}

#[test]
fn divergent_learning_rate_reports_the_offending_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_setup(dir.path(), 3, 1e18);
    match train(&cfg, &dir.path().join("run")) {
        Err(swinseg_cli::AppError::Divergence { .. }) => {}
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log.epoch_losses)),
    }
}

#[test]
fn predict_full_covers_every_pixel_once_and_matches_half_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data_dir) = tiny_setup(dir.path(), 1, 1e-3);
    let outcome = train(&cfg, &dir.path().join("run")).unwrap();
    let model = SwinUnetModel(cfg.model.clone());

    let manifest = swinseg_datagen::load_manifest(&cfg.manifest).unwrap();
    let record = read_slice(&data_dir, &manifest.records[0]).unwrap();

    let mask = predict_full(&model, &outcome.params, &record, cfg.channel_mode).unwrap();
    assert_eq!((mask.width, mask.height), (record.width(), record.height()));
    assert!(mask.data.iter().all(|&v| v < 3));

    // the stitched halves equal direct per-half predictions
    let (left, right) = split_halves(&record).unwrap();
    let lm = predict_half(&model, &outcome.params, &left, cfg.channel_mode).unwrap();
    let rm = predict_half(&model, &outcome.params, &right, cfg.channel_mode).unwrap();
    for y in 0..mask.height {
        let row = &mask.data[y * mask.width..(y + 1) * mask.width];
        assert_eq!(&row[..mask.width / 2], &lm.data[y * lm.width..(y + 1) * lm.width]);
        assert_eq!(&row[mask.width / 2..], &rm.data[y * rm.width..(y + 1) * rm.width]);
    }
}

#[test]
fn pretext_loss_decreases_over_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, _) = tiny_setup(dir.path(), 1, 1e-3);
    cfg.pretext = PretextConfig { count: 16, epochs: 4 };
    let (_, losses) = pretrain_pretext(&cfg).unwrap();
    assert_eq!(losses.len(), 4);
    assert!(
        losses.last().unwrap() < losses.first().unwrap(),
        "pretext loss should fall: {:?}",
        losses
    );
}

#[test]
fn pretext_encoder_is_loadable_and_scoped() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = tiny_setup(dir.path(), 1, 1e-3);
    let (encoder, losses) = pretrain_pretext(&cfg).unwrap();
    assert_eq!(losses.len(), cfg.pretext.epochs);
    assert!(!encoder.is_empty());
    assert!(encoder.names().all(encoder_scope), "pretext set must stay within the encoder scope");

    // loadable without shape errors, decoder untouched
    let model = SwinUnetModel(cfg.model.clone());
    let mut params = model.init_params(cfg.seed).unwrap();
    let before = params.clone();
    let report = init_transfer(&mut params, &encoder, TransferScope::EncoderOnly).unwrap();
    assert_eq!(report.loaded.len(), encoder.len());
    for (name, t) in params.iter() {
        if !encoder_scope(name) {
            assert_eq!(t.data(), before.get(name).unwrap().data());
        }
    }

    // and the transfer-aware entry point accepts it
    let outcome = train_with_pretrained(&cfg, &dir.path().join("run"), Some(&encoder)).unwrap();
    assert!(outcome.log.epoch_losses.iter().all(|l| l.is_finite()));
}

#[test]
fn center_filtering_restricts_splits() {
    let dir = tempfile::tempdir().unwrap();
    let data_cfg = DataConfig {
        count: 20,
        spec: PhantomSpec { height: 16, width: 32, seed: 6, ..PhantomSpec::default() },
        ..DataConfig::default()
    };
    let data_dir = dir.path().join("data");
    make_dataset(&data_cfg, 6, &data_dir).unwrap();
    let (train_c1, test_c2) = load_dataset(
        &data_dir.join("manifest.json"),
        swinseg_cli::ChannelMode::Stacked,
        Some(1),
        Some(2),
    )
    .unwrap();
    assert!(train_c1.iter().all(|s| s.center == 1));
    assert!(test_c2.iter().all(|s| s.center == 2));
}

#[test]
fn build_input_rejects_mismatched_extents() {
    let spec = PhantomSpec { height: 16, width: 32, ..PhantomSpec::default() };
    let mut record = generate_slice(&spec, &CenterProfile::center1(), 3).unwrap();
    record.t2.width = 16;
    record.t2.height = 32;
    assert!(build_input(&record, swinseg_cli::ChannelMode::Stacked).is_err());
}
