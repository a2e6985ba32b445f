mod common;

use std::collections::BTreeMap;

use common::{random, rel_err, rng};
use proptest::prelude::*;
use recap_core::backbone::BackboneConfig;
use recap_core::fusion::{downsample, fuse_and_pool, fuse_scale, DownsampleOrder, FusionConfig};
use recap_core::model::{trainable_params, Detector, ModelConfig, Variant};
use recap_core::nn::Ctx;
use recap_core::Error;
use recap_tensor::{BnMode, Graph, ParamStore, Tensor};

const ORDERS: [DownsampleOrder; 2] = [DownsampleOrder::PoolThenResize, DownsampleOrder::ResizeThenPool];

fn grid_shape(h: usize, w: usize, order: DownsampleOrder) -> Vec<usize> {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, h, w]));
    let out = downsample(&mut g, x, 7, 7, order).unwrap();
    g.shape(out).to_vec()
}

#[test]
fn every_admissible_map_lands_on_the_grid() {
    for order in ORDERS {
        for h in 7..=64 {
            assert_eq!(grid_shape(h, h, order), [1, 2, 7, 7], "{h}x{h} {order:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn rectangular_maps_land_on_the_grid(h in 7usize..80, w in 7usize..80, pool_first in any::<bool>()) {
        let order = if pool_first { ORDERS[0] } else { ORDERS[1] };
        prop_assert_eq!(grid_shape(h, w, order), vec![1, 2, 7, 7]);
    }
}

#[test]
fn maps_below_the_grid_are_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[1, 2, 6, 9]));
    assert!(matches!(downsample(&mut g, x, 7, 7, DownsampleOrder::default()), Err(Error::Shape(_))));
}

/// Max pool with window = stride = `k` over one `h x w` plane.
fn maxpool_oracle(x: &[f64], h: usize, w: usize, k: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = ((h - k) / k + 1, (w - k) / k + 1);
    let mut out = vec![f64::NEG_INFINITY; ho * wo];
    for oy in 0..ho {
        for ox in 0..wo {
            for dy in 0..k {
                for dx in 0..k {
                    let v = x[(oy * k + dy) * w + ox * k + dx];
                    out[oy * wo + ox] = out[oy * wo + ox].max(v);
                }
            }
        }
    }
    (out, ho, wo)
}

/// Half-pixel-centre bilinear resize with edge clamping.
fn bilinear_oracle(x: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let src = |o: usize, n_in: usize, n_out: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        let (y0, y1, fy) = src(oy, h, oh);
        for ox in 0..ow {
            let (x0, x1, fx) = src(ox, w, ow);
            let top = x[y0 * w + x0] * (1.0 - fx) + x[y0 * w + x1] * fx;
            let bot = x[y1 * w + x0] * (1.0 - fx) + x[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

#[test]
fn pool_then_resize_matches_composed_oracle() {
    for (i, &(h, w)) in [(7, 7), (14, 14), (28, 28), (56, 56), (20, 31), (15, 9)].iter().enumerate() {
        let x = random(&[2, 3, h, w], 60 + i as u64);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = downsample(&mut g, xv, 7, 7, DownsampleOrder::PoolThenResize).unwrap();
        let got = g.value(out).data();
        let k = (h / 7).min(w / 7);
        for (p, plane) in x.data().chunks(h * w).enumerate() {
            let (pooled, ph, pw) = maxpool_oracle(plane, h, w, k);
            let want = bilinear_oracle(&pooled, ph, pw, 7, 7);
            let err = rel_err(&got[p * 49..(p + 1) * 49], &want);
            assert!(err <= 1e-12, "{h}x{w}: {err:e}");
        }
    }
}

#[test]
fn fuse_scale_concatenates_channels() {
    let mut g = Graph::new();
    let x = g.constant(random(&[2, 3, 14, 14], 1));
    let y = g.constant(random(&[2, 3, 14, 14], 2));
    let cfg = FusionConfig::default();
    let out = fuse_scale(&mut g, x, y, &cfg).unwrap();
    assert_eq!(g.shape(out), [2, 6, 7, 7]);
    // channels 3..6 are y's downsampled map alone
    let yd = downsample(&mut g, y, 7, 7, cfg.downsample).unwrap();
    assert_eq!(&g.value(out).data()[3 * 49..6 * 49], &g.value(yd).data()[..3 * 49]);
}

#[test]
fn tiny_pooled_vector_has_224_entries() {
    let cfg = ModelConfig::for_variant(Variant::Proposed(3), BackboneConfig::tiny());
    assert_eq!(cfg.pooled_len(), 224);

    let sides = BackboneConfig::tiny().scale_sides();
    let mut g = Graph::<f64>::new();
    let attended: Vec<_> = [16, 32, 64]
        .iter()
        .zip(sides)
        .enumerate()
        .map(|(i, (&c, s))| {
            let x = g.constant(random(&[2, c, s, s], 70 + i as u64));
            let y = g.constant(random(&[2, c, s, s], 80 + i as u64));
            (x, y)
        })
        .collect();
    let pooled = fuse_and_pool(&mut g, &attended, &cfg.fusion).unwrap();
    assert_eq!(g.shape(pooled), [2, 224]);
    assert!(matches!(fuse_and_pool(&mut g, &attended[1..], &cfg.fusion), Err(Error::Config(_))));
}

fn param_shapes(variant: Variant) -> BTreeMap<String, Vec<usize>> {
    let mut store = ParamStore::<f32>::new();
    Detector::new(&ModelConfig::for_variant(variant, BackboneConfig::tiny()), &mut store, &mut rng(0)).unwrap();
    store
        .iter()
        .filter(|p| p.requires_grad)
        .map(|p| (p.name.clone(), p.value.shape().to_vec()))
        .collect()
}

#[test]
fn two_scale_attention_weights_are_a_strict_subset_of_three_scale() {
    let two = param_shapes(Variant::Proposed(2));
    let three = param_shapes(Variant::Proposed(3));
    let attn = |m: &BTreeMap<String, Vec<usize>>| -> BTreeMap<String, Vec<usize>> {
        m.iter().filter(|(k, _)| k.starts_with("xattn.")).map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    let (a2, a3) = (attn(&two), attn(&three));
    assert!(a2.len() < a3.len());
    for (name, shape) in &a2 {
        assert_eq!(a3.get(name), Some(shape), "{name}");
    }
    // backbones agree exactly
    let backbone = |m: &BTreeMap<String, Vec<usize>>| -> Vec<(String, Vec<usize>)> {
        m.iter().filter(|(k, _)| k.starts_with("b1.") || k.starts_with("b2.")).map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    assert_eq!(backbone(&two), backbone(&three));
}

/// Loss of a small fused model as a function of its parameter store.
fn small_loss(store: &mut ParamStore<f64>, det: &Detector, band: &Tensor<f64>, rgb: &Tensor<f64>) -> (f64, Vec<Option<Tensor<f64>>>) {
    let mut ctx = Ctx::new(store, BnMode::Train);
    let (b, r) = (ctx.input(band.clone()), ctx.input(rgb.clone()));
    let logits = det.forward(&mut ctx, b, r).unwrap();
    let loss = ctx.graph.cross_entropy(logits, &[0, 1]).unwrap();
    let value = ctx.graph.value(loss).data()[0];
    ctx.backward(loss).unwrap();
    let grads = store.iter().map(|p| p.grad.clone()).collect();
    store.zero_grad();
    (value, grads)
}

#[test]
fn end_to_end_gradients_match_finite_differences_on_sampled_weights() {
    let backbone = BackboneConfig {
        stage_channels: [4, 6, 8],
        blocks_per_stage: [1, 1, 1],
        input_side: 112,
        preset_name: "check".into(),
    };
    let mut cfg = ModelConfig::for_variant(Variant::Proposed(3), backbone);
    cfg.fusion.hidden_nodes = 8;
    let mut store = ParamStore::<f64>::new();
    let det = Detector::new(&cfg, &mut store, &mut rng(3)).unwrap();
    // the zero-initialized output layer would hide every upstream gradient
    let fc2 = store.id("head.fc2.w").unwrap();
    let shape = store.get(fc2).value.shape().to_vec();
    store.get_mut(fc2).value = random(&shape, 4);

    let band = random(&[2, 3, 112, 112], 5);
    let rgb = random(&[2, 3, 112, 112], 6);
    let (_, grads) = small_loss(&mut store, &det, &band, &rgb);

    let mut sampler = rng(7);
    let trainable: Vec<usize> = (0..store.len()).filter(|&i| grads[i].is_some()).collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let h = 1e-5;
    for _ in 0..48 {
        use rand::Rng;
        let i = trainable[sampler.gen_range(0..trainable.len())];
        let id = store.iter().nth(i).map(|p| store.id(&p.name).unwrap()).unwrap();
        let j = sampler.gen_range(0..store.get(id).value.numel());
        let orig = store.get(id).value.data()[j];
        store.get_mut(id).value.data_mut()[j] = orig + h;
        let plus = small_loss(&mut store, &det, &band, &rgb).0;
        store.get_mut(id).value.data_mut()[j] = orig - h;
        let minus = small_loss(&mut store, &det, &band, &rgb).0;
        store.get_mut(id).value.data_mut()[j] = orig;
        analytic.push(grads[i].as_ref().unwrap().data()[j]);
        numeric.push((plus - minus) / (2.0 * h));
    }
    let err = rel_err(&analytic, &numeric);
    assert!(err <= 1e-3, "sampled-weight gradient error {err:e}");
    assert!(trainable_params(&store) > 0);
}
