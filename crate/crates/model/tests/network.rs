//! Whole-network properties: logits shapes, determinism, the residual-path
//! architectural identity, up/down-sampling layer gradients, and sampled
//! end-to-end gradient checks for both networks.

mod common;

use common::{fd_check_named, random_tensor, weighted_sum};
use swinseg_model::layout::{linear, norm};
use swinseg_model::swin::{final_patch_expanding_x4, patch_embed, patch_expanding, patch_merging, skip_fuse};
use swinseg_model::{
    bind_swin_unet, bind_unet, forward_swin_unet, forward_unet, init_swin_unet, init_unet,
    BindVisitor, ExpandLayout, InitVisitor, MergeLayout, SwinUnetConfig, SwinUnetLayout,
    UNetBaselineConfig,
};
use swinseg_tensor::rng::SeededRng;
use swinseg_tensor::{Graph, NamedParameterSet, Tensor, Var};

fn tiny_swin_cfg() -> SwinUnetConfig {
    SwinUnetConfig {
        input_h: 32,
        input_w: 32,
        embed_dim: 16,
        encoder_stages: 3,
        heads: vec![2, 4, 8, 16],
        window: 4,
        classes: 3,
        rel_bias: true,
    }
}

#[test]
fn desk_config_produces_full_resolution_logits() {
    let cfg = SwinUnetConfig::desk();
    let params = init_swin_unet(&cfg, 7).unwrap();
    let mut rng = SeededRng::new(50);
    let x = random_tensor(&mut rng, &[1, 64, 64, 3]);
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
    let logits = forward_swin_unet(&mut g, &cfg, &layout, xv).unwrap();
    assert_eq!(g.shape(logits), &[1, 64, 64, 3]);
}

#[test]
fn paper_scale_config_produces_full_resolution_logits() {
    let cfg = SwinUnetConfig::paper_faithful();
    let params = init_swin_unet(&cfg, 7).unwrap();
    let mut rng = SeededRng::new(51);
    let x = random_tensor(&mut rng, &[1, 224, 224, 3]);
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
    let logits = forward_swin_unet(&mut g, &cfg, &layout, xv).unwrap();
    assert_eq!(g.shape(logits), &[1, 224, 224, 3]);
}

#[test]
fn forward_is_deterministic() {
    let cfg = tiny_swin_cfg();
    let params = init_swin_unet(&cfg, 11).unwrap();
    let mut rng = SeededRng::new(52);
    let x = random_tensor(&mut rng, &[2, 32, 32, 3]);
    let run = || {
        let mut g = Graph::new();
        let xv = g.constant(x.clone()).unwrap();
        let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
        let logits = forward_swin_unet(&mut g, &cfg, &layout, xv).unwrap();
        g.value(logits).to_vec()
    };
    assert_eq!(run(), run(), "two forwards must agree bit for bit");
}

#[test]
fn mismatched_input_rejected() {
    let cfg = tiny_swin_cfg();
    let params = init_swin_unet(&cfg, 11).unwrap();
    let mut g = Graph::new();
    let xv = g.constant(Tensor::zeros(&[1, 64, 64, 3])).unwrap();
    let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
    assert!(forward_swin_unet(&mut g, &cfg, &layout, xv).is_err());
}

/// The same network with every block pair skipped: patch embed, merges,
/// expands, fuses, final expansion, head.
fn residual_reference(
    g: &mut Graph,
    cfg: &SwinUnetConfig,
    layout: &SwinUnetLayout<Var>,
    image: Var,
) -> Var {
    let mut x = patch_embed(g, image, &layout.patch_embed).unwrap();
    let mut skips = Vec::new();
    for stage in &layout.encoder {
        skips.push(x);
        x = patch_merging(g, x, &stage.merge).unwrap();
    }
    for (j, stage) in layout.decoder.iter().enumerate() {
        x = patch_expanding(g, x, &stage.expand).unwrap();
        x = skip_fuse(g, x, skips[cfg.encoder_stages - 1 - j], &stage.fuse).unwrap();
    }
    x = final_patch_expanding_x4(g, x, &layout.final_expand).unwrap();
    x = swinseg_model::layout::apply_norm(g, x, &layout.final_norm).unwrap();
    g.linear(x, layout.head.weight, layout.head.bias).unwrap()
}

#[test]
fn zeroed_projections_reduce_to_residual_stream() {
    let cfg = tiny_swin_cfg();
    let mut params = init_swin_unet(&cfg, 13).unwrap();
    let zero_names: Vec<String> = params
        .names()
        .filter(|n| {
            n.ends_with("attn.wo.weight")
                || n.ends_with("attn.wo.bias")
                || n.ends_with("mlp.fc2.weight")
                || n.ends_with("mlp.fc2.bias")
        })
        .map(str::to_owned)
        .collect();
    for name in zero_names {
        params.get_mut(&name).unwrap().data_mut().fill(0.0);
    }
    let mut rng = SeededRng::new(53);
    let x = random_tensor(&mut rng, &[1, 32, 32, 3]);
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
    let full = forward_swin_unet(&mut g, &cfg, &layout, xv).unwrap();
    let reference = residual_reference(&mut g, &cfg, &layout, xv);
    assert_eq!(g.value(full), g.value(reference));
}

#[test]
fn patch_merging_shapes_and_gradients() {
    let (b, h, w, c) = (1usize, 4usize, 4usize, 3usize);
    let mut v = InitVisitor::new(61);
    let _ = MergeLayout {
        norm: norm(&mut v, "merge.norm", 4 * c).unwrap(),
        reduce: linear(&mut v, "merge.reduce", 4 * c, 2 * c, false).unwrap(),
    };
    let params = v.out;
    let mut rng = SeededRng::new(62);
    let x = random_tensor(&mut rng, &[b, h, w, c]);

    let loss = move |g: &mut Graph, p: &NamedParameterSet, xv: Var| {
        let mut bind = BindVisitor::new(g, p);
        let layout = MergeLayout {
            norm: norm(&mut bind, "merge.norm", 4 * c)?,
            reduce: linear(&mut bind, "merge.reduce", 4 * c, 2 * c, false)?,
        };
        let bindings = bind.finish()?;
        let y = patch_merging(g, xv, &layout)?;
        assert_eq!(g.shape(y), &[b, h / 2, w / 2, 2 * c]);
        let l = weighted_sum(g, y, 63)?;
        Ok((l, bindings))
    };
    let err = fd_check_named(&loss, &params, &x, None, 1e-5, 64);
    assert!(err < 1e-4, "max rel err {}", err);
}

#[test]
fn patch_expanding_shapes_and_gradients() {
    let (b, h, w, c) = (1usize, 2usize, 2usize, 8usize);
    let mut v = InitVisitor::new(65);
    let _ = ExpandLayout {
        expand: linear(&mut v, "expand", c, 2 * c, false).unwrap(),
        norm: norm(&mut v, "expand_norm", c / 2).unwrap(),
    };
    let params = v.out;
    let mut rng = SeededRng::new(66);
    let x = random_tensor(&mut rng, &[b, h, w, c]);

    let loss = move |g: &mut Graph, p: &NamedParameterSet, xv: Var| {
        let mut bind = BindVisitor::new(g, p);
        let layout = ExpandLayout {
            expand: linear(&mut bind, "expand", c, 2 * c, false)?,
            norm: norm(&mut bind, "expand_norm", c / 2)?,
        };
        let bindings = bind.finish()?;
        let y = patch_expanding(g, xv, &layout)?;
        assert_eq!(g.shape(y), &[b, 2 * h, 2 * w, c / 2]);
        let l = weighted_sum(g, y, 67)?;
        Ok((l, bindings))
    };
    let err = fd_check_named(&loss, &params, &x, None, 1e-5, 68);
    assert!(err < 1e-4, "max rel err {}", err);
}

#[test]
fn merge_then_expand_restores_shape() {
    let cfg = tiny_swin_cfg();
    let params = init_swin_unet(&cfg, 14).unwrap();
    let mut rng = SeededRng::new(69);
    let x = random_tensor(&mut rng, &[1, 8, 8, 16]);
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let (layout, _) = bind_swin_unet(&mut g, &cfg, &params).unwrap();
    let merged = patch_merging(&mut g, xv, &layout.encoder[0].merge).unwrap();
    assert_eq!(g.shape(merged), &[1, 4, 4, 32]);
    let expanded = patch_expanding(&mut g, merged, &layout.decoder[2].expand).unwrap();
    assert_eq!(g.shape(expanded), &[1, 8, 8, 16]);
}

#[test]
fn swin_unet_end_to_end_sampled_gradients() {
    let cfg = tiny_swin_cfg();
    let params = init_swin_unet(&cfg, 15).unwrap();
    let mut rng = SeededRng::new(70);
    let x = random_tensor(&mut rng, &[1, 32, 32, 3]);
    let labels: Vec<u8> = (0..32 * 32).map(|_| rng.below(3) as u8).collect();

    let loss = move |g: &mut Graph, p: &NamedParameterSet, xv: Var| {
        let (layout, bindings) = bind_swin_unet(g, &tiny_swin_cfg(), p)?;
        let logits = forward_swin_unet(g, &tiny_swin_cfg(), &layout, xv)?;
        let l = g.cross_entropy(logits, std::rc::Rc::new(labels.clone()))?;
        Ok((l, bindings))
    };
    let err = fd_check_named(&loss, &params, &x, Some(48), 1e-5, 71);
    assert!(err < 1e-3, "max rel err {}", err);
}

fn tiny_unet_cfg() -> UNetBaselineConfig {
    UNetBaselineConfig { input_h: 16, input_w: 16, base_channels: 4, depth: 2, classes: 3 }
}

#[test]
fn unet_logits_shape_and_zero_weights_give_constant_logits() {
    let cfg = UNetBaselineConfig::desk();
    let params = init_unet(&cfg, 7).unwrap();
    let mut rng = SeededRng::new(72);
    let x = random_tensor(&mut rng, &[1, 64, 64, 3]);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let (layout, _) = bind_unet(&mut g, &cfg, &params).unwrap();
    let logits = forward_unet(&mut g, &cfg, &layout, xv).unwrap();
    assert_eq!(g.shape(logits), &[1, 64, 64, 3]);

    let mut zeroed = params.clone();
    let names: Vec<String> = zeroed.names().map(str::to_owned).collect();
    for n in names {
        zeroed.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let (layout, _) = bind_unet(&mut g, &cfg, &zeroed).unwrap();
    let logits = forward_unet(&mut g, &cfg, &layout, xv).unwrap();
    assert!(g.value(logits).iter().all(|&v| v == 0.0), "zero weights give constant logits");
}

#[test]
fn unet_end_to_end_sampled_gradients() {
    let cfg = tiny_unet_cfg();
    let params = init_unet(&cfg, 16).unwrap();
    let mut rng = SeededRng::new(73);
    let x = random_tensor(&mut rng, &[1, 16, 16, 3]);
    let labels: Vec<u8> = (0..16 * 16).map(|_| rng.below(3) as u8).collect();

    let loss = move |g: &mut Graph, p: &NamedParameterSet, xv: Var| {
        let (layout, bindings) = bind_unet(g, &tiny_unet_cfg(), p)?;
        let logits = forward_unet(g, &tiny_unet_cfg(), &layout, xv)?;
        let l = g.cross_entropy(logits, std::rc::Rc::new(labels.clone()))?;
        Ok((l, bindings))
    };
    let err = fd_check_named(&loss, &params, &x, Some(60), 1e-5, 74);
    assert!(err < 1e-3, "max rel err {}", err);
}
