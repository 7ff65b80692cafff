//! Per-layer contract tests: patch embedding, merging/expanding shapes and
//! skip fusion algebra.

mod common;

use common::random_tensor;
use swinseg_model::layout::{conv, linear, norm, Init};
use swinseg_model::swin::{
    final_patch_expanding_x4, patch_embed, patch_expanding, patch_merging, skip_fuse,
};
use swinseg_model::{
    BindVisitor, ExpandLayout, InitVisitor, LinearLayout, MergeLayout, PatchEmbedLayout,
};
use swinseg_tensor::rng::SeededRng;
use swinseg_tensor::{Graph, Tensor, Var};

fn embed_layout(g: &mut Graph, params: &swinseg_tensor::NamedParameterSet, c: usize) -> PatchEmbedLayout<Var> {
    let mut bind = BindVisitor::new(g, params);
    let layout = PatchEmbedLayout {
        proj: conv(&mut bind, "pe.proj", 4, 4, 3, c, Init::Normal(0.02)).unwrap(),
        norm: norm(&mut bind, "pe.norm", c).unwrap(),
    };
    bind.finish().unwrap();
    layout
}

fn init_embed(c: usize, seed: u64) -> swinseg_tensor::NamedParameterSet {
    let mut v = InitVisitor::new(seed);
    let _ = conv(&mut v, "pe.proj", 4, 4, 3, c, Init::Normal(0.02)).unwrap();
    let _ = norm(&mut v, "pe.norm", c).unwrap();
    v.out
}

#[test]
fn patch_embed_quarters_resolution() {
    let params = init_embed(48, 1);
    let mut rng = SeededRng::new(2);
    let mut g = Graph::new();
    let x = g.constant(random_tensor(&mut rng, &[1, 64, 64, 3])).unwrap();
    let layout = embed_layout(&mut g, &params, 48);
    let y = patch_embed(&mut g, x, &layout).unwrap();
    assert_eq!(g.shape(y), &[1, 16, 16, 48]);
}

#[test]
fn patch_embed_backbone_scale_geometry() {
    let params = init_embed(96, 3);
    let mut rng = SeededRng::new(4);
    let mut g = Graph::new();
    let x = g.constant(random_tensor(&mut rng, &[1, 224, 224, 3])).unwrap();
    let layout = embed_layout(&mut g, &params, 96);
    let y = patch_embed(&mut g, x, &layout).unwrap();
    assert_eq!(g.shape(y), &[1, 56, 56, 96]);
}

#[test]
fn patch_embed_constant_image_is_spatially_constant() {
    // zero bias: a stride-4 convolution of a constant image gives the same
    // vector at every site, and LayerNorm keeps it spatially constant
    let mut params = init_embed(16, 5);
    params.get_mut("pe.proj.bias").unwrap().data_mut().fill(0.0);
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[1, 16, 16, 3], 0.37)).unwrap();
    let layout = embed_layout(&mut g, &params, 16);
    let y = patch_embed(&mut g, x, &layout).unwrap();
    let data = g.value(y);
    let first = &data[..16];
    for site in data.chunks_exact(16) {
        assert_eq!(site, first, "every spatial site must carry the same embedding");
    }
}

#[test]
fn patch_embed_rejects_indivisible_extents() {
    let params = init_embed(8, 6);
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 18, 16, 3])).unwrap();
    let layout = embed_layout(&mut g, &params, 8);
    assert!(patch_embed(&mut g, x, &layout).is_err());
}

#[test]
fn merging_and_expanding_minimal_shapes() {
    // merging: 2x2x1 -> 1x1x2
    let mut v = InitVisitor::new(7);
    let _ = norm(&mut v, "m.norm", 4).unwrap();
    let _ = linear(&mut v, "m.reduce", 4, 2, false).unwrap();
    let params = v.out;
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let mut bind = BindVisitor::new(&mut g, &params);
    let merge = MergeLayout {
        norm: norm(&mut bind, "m.norm", 4).unwrap(),
        reduce: linear(&mut bind, "m.reduce", 4, 2, false).unwrap(),
    };
    bind.finish().unwrap();
    let y = patch_merging(&mut g, x, &merge).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 1, 2]);

    // expanding: 1x1x4 -> 2x2x2
    let mut v = InitVisitor::new(8);
    let _ = linear(&mut v, "e.expand", 4, 8, false).unwrap();
    let _ = norm(&mut v, "e.norm", 2).unwrap();
    let params = v.out;
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, 1, 1, 4], vec![0.5, -1.0, 2.0, 0.25]).unwrap()).unwrap();
    let mut bind = BindVisitor::new(&mut g, &params);
    let expand = ExpandLayout {
        expand: linear(&mut bind, "e.expand", 4, 8, false).unwrap(),
        norm: norm(&mut bind, "e.norm", 2).unwrap(),
    };
    bind.finish().unwrap();
    let y = patch_expanding(&mut g, x, &expand).unwrap();
    assert_eq!(g.shape(y), &[1, 2, 2, 2]);

    // odd extents and odd channels are dimension errors
    let mut g2 = Graph::new();
    let bad = g2.constant(Tensor::zeros(&[1, 3, 2, 1])).unwrap();
    let mut bind = BindVisitor::new(&mut g2, &params);
    let _ = linear(&mut bind, "e.expand", 4, 8, false).unwrap();
    let _ = norm(&mut bind, "e.norm", 2).unwrap();
    drop(bind);
    let mut v = InitVisitor::new(9);
    let _ = norm(&mut v, "m.norm", 4).unwrap();
    let _ = linear(&mut v, "m.reduce", 4, 2, false).unwrap();
    let p2 = v.out;
    let mut bind = BindVisitor::new(&mut g2, &p2);
    let merge = MergeLayout {
        norm: norm(&mut bind, "m.norm", 4).unwrap(),
        reduce: linear(&mut bind, "m.reduce", 4, 2, false).unwrap(),
    };
    bind.finish().unwrap();
    assert!(patch_merging(&mut g2, bad, &merge).is_err());
}

#[test]
fn final_expanding_x4_desk_shape() {
    let mut v = InitVisitor::new(10);
    let _ = linear(&mut v, "fx", 48, 16 * 48, false).unwrap();
    let params = v.out;
    let mut rng = SeededRng::new(11);
    let mut g = Graph::new();
    let x = g.constant(random_tensor(&mut rng, &[1, 16, 16, 48])).unwrap();
    let mut bind = BindVisitor::new(&mut g, &params);
    let fx = linear(&mut bind, "fx", 48, 16 * 48, false).unwrap();
    bind.finish().unwrap();
    let y = final_patch_expanding_x4(&mut g, x, &fx).unwrap();
    assert_eq!(g.shape(y), &[1, 64, 64, 48]);
}

fn fuse_layout(g: &mut Graph, w: Tensor, b: Option<Tensor>) -> LinearLayout<Var> {
    let weight = g.constant(w).unwrap();
    let bias = b.map(|b| g.constant(b).unwrap());
    LinearLayout { weight, bias }
}

#[test]
fn skip_fuse_projection_selects_first_half() {
    // fuse weight [I; 0]: output equals the decoder stream exactly
    let c = 3;
    let mut w = Tensor::zeros(&[2 * c, c]);
    for i in 0..c {
        w.data_mut()[i * c + i] = 1.0;
    }
    let mut rng = SeededRng::new(12);
    let dec = random_tensor(&mut rng, &[1, 2, 2, c]);
    let enc = random_tensor(&mut rng, &[1, 2, 2, c]);
    let mut g = Graph::new();
    let dv = g.constant(dec.clone()).unwrap();
    let ev = g.constant(enc).unwrap();
    let fuse = fuse_layout(&mut g, w, Some(Tensor::zeros(&[c])));
    let y = skip_fuse(&mut g, dv, ev, &fuse).unwrap();
    assert_eq!(g.value(y), dec.data());
}

#[test]
fn skip_fuse_half_identity_averages_streams() {
    // fuse weight 0.5 [I; I]: output is the elementwise mean
    let c = 2;
    let mut w = Tensor::zeros(&[2 * c, c]);
    for i in 0..c {
        w.data_mut()[i * c + i] = 0.5;
        w.data_mut()[(c + i) * c + i] = 0.5;
    }
    let mut rng = SeededRng::new(13);
    let dec = random_tensor(&mut rng, &[1, 2, 1, c]);
    let enc = random_tensor(&mut rng, &[1, 2, 1, c]);
    let mut g = Graph::new();
    let dv = g.constant(dec.clone()).unwrap();
    let ev = g.constant(enc.clone()).unwrap();
    let fuse = fuse_layout(&mut g, w, None);
    let y = skip_fuse(&mut g, dv, ev, &fuse).unwrap();
    for ((got, a), b) in g.value(y).iter().zip(dec.data()).zip(enc.data()) {
        assert!((got - 0.5 * (a + b)).abs() < 1e-12);
    }
}

#[test]
fn skip_fuse_keeps_channel_extent_and_checks_shapes() {
    let c = 4;
    let mut v = InitVisitor::new(14);
    let _ = linear(&mut v, "fuse", 2 * c, c, true).unwrap();
    let params = v.out;
    let mut rng = SeededRng::new(15);
    let mut g = Graph::new();
    let dec = g.constant(random_tensor(&mut rng, &[1, 4, 4, c])).unwrap();
    let enc = g.constant(random_tensor(&mut rng, &[1, 4, 4, c])).unwrap();
    let mut bind = BindVisitor::new(&mut g, &params);
    let fuse = linear(&mut bind, "fuse", 2 * c, c, true).unwrap();
    bind.finish().unwrap();
    let y = skip_fuse(&mut g, dec, enc, &fuse).unwrap();
    assert_eq!(g.shape(y), &[1, 4, 4, c]);

    let wrong = g.constant(Tensor::zeros(&[1, 2, 2, c])).unwrap();
    assert!(skip_fuse(&mut g, dec, wrong, &fuse).is_err());
}
