mod common;

use common::{attention_oracle, gradcheck, random, rng};
use proptest::prelude::*;
use recap_core::attention::{cross_attend, CrossAttention};
use recap_core::backbone::ScaleFeatures;
use recap_core::nn::Ctx;
use recap_core::Error;
use recap_tensor::{BnMode, Graph, ParamStore, Tensor};

fn run(x: &Tensor<f64>, y: &Tensor<f64>, w: [&Tensor<f64>; 3], scale: bool) -> Tensor<f64> {
    let mut g = Graph::new();
    let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
    let [q, k, v] = w.map(|t| g.constant(t.clone()));
    let out = cross_attend(&mut g, xv, yv, q, k, v, scale).unwrap();
    g.value(out).clone()
}

fn check_oracle(n: usize, c: usize, h: usize, w: usize, seed: u64, scale: bool) -> f64 {
    let x = random(&[n, c, h, w], seed);
    let y = random(&[n, c, h, w], seed + 1);
    let ws: Vec<_> = (0..3).map(|i| random(&[c, c, 1, 1], seed + 10 + i)).collect();
    let out = run(&x, &y, [&ws[0], &ws[1], &ws[2]], scale);
    let t = h * w;
    let mut worst: f64 = 0.0;
    for s in 0..n {
        let span = s * c * t..(s + 1) * c * t;
        let want = attention_oracle(
            &x.data()[span.clone()],
            &y.data()[span.clone()],
            c,
            t,
            ws[0].data(),
            ws[1].data(),
            ws[2].data(),
            scale,
        );
        for (a, b) in out.data()[span].iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn zero_value_weights_give_exact_residual() {
    let x = random(&[2, 4, 5, 3], 1);
    let y = random(&[2, 4, 5, 3], 2);
    let (q, k) = (random(&[4, 4, 1, 1], 3), random(&[4, 4, 1, 1], 4));
    let zero = Tensor::zeros(&[4, 4, 1, 1]);
    let out = run(&x, &y, [&q, &k, &zero], false);
    assert_eq!(out.data(), x.data());

    let x32 = x.cast::<f32>();
    let mut g = Graph::<f32>::new();
    let xv = g.constant(x32.clone());
    let yv = g.constant(y.cast());
    let (qv, kv, vv) = (g.constant(q.cast()), g.constant(k.cast()), g.constant(zero.cast()));
    let out = cross_attend(&mut g, xv, yv, qv, kv, vv, true).unwrap();
    assert_eq!(g.value(out).data(), x32.data());
}

#[test]
fn matches_token_loop_oracle() {
    for (i, &(n, c, h, w)) in [(1, 1, 1, 1), (1, 3, 2, 5), (2, 4, 3, 3), (1, 2, 9, 9), (2, 5, 7, 11)].iter().enumerate() {
        for scale in [false, true] {
            let err = check_oracle(n, c, h, w, 100 + i as u64, scale);
            assert!(err <= 1e-10, "shape {:?} scale {scale}: {err:e}", (n, c, h, w));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn token_loop_oracle_on_random_shapes(c in 1usize..6, h in 1usize..8, w in 1usize..8, seed in 0u64..1000) {
        prop_assert!(check_oracle(1, c, h, w, seed, false) <= 1e-10);
    }
}

#[test]
fn gradients_match_finite_differences() {
    // 81 tokens spans two row blocks of the fused kernel
    for &(c, h, w) in &[(3, 2, 3), (2, 9, 9)] {
        let inputs = vec![
            random(&[1, c, h, w], 7),
            random(&[1, c, h, w], 8),
            random(&[c, c, 1, 1], 9),
            random(&[c, c, 1, 1], 10),
            random(&[c, c, 1, 1], 11),
        ];
        let err = gradcheck(
            |g, v| cross_attend(g, v[0], v[1], v[2], v[3], v[4], false),
            &inputs,
            12,
            1e-5,
        );
        assert!(err <= 1e-4, "c={c} {h}x{w}: {err:e}");
    }
}

#[test]
fn equivariant_under_joint_token_permutation() {
    let (c, h, w) = (3, 4, 5);
    let x = random(&[1, c, h, w], 20);
    let y = random(&[1, c, h, w], 21);
    let ws: Vec<_> = (0..3).map(|i| random(&[c, c, 1, 1], 22 + i)).collect();
    // point reflection of the grid: token t -> T-1-t
    let flip = |t: &Tensor<f64>| {
        let n = h * w;
        let data: Vec<f64> = (0..c * n).map(|i| t.data()[(i / n) * n + n - 1 - i % n]).collect();
        Tensor::new(&[1, c, h, w], data).unwrap()
    };
    let a = flip(&run(&x, &y, [&ws[0], &ws[1], &ws[2]], false));
    let b = run(&flip(&x), &flip(&y), [&ws[0], &ws[1], &ws[2]], false);
    assert!(a.max_abs_diff(&b) <= 1e-12);
}

#[test]
fn single_token_reduces_to_value_projection() {
    let c = 4;
    let x = random(&[1, c, 1, 1], 30);
    let y = random(&[1, c, 1, 1], 31);
    let ws: Vec<_> = (0..3).map(|i| random(&[c, c, 1, 1], 32 + i)).collect();
    let out = run(&x, &y, [&ws[0], &ws[1], &ws[2]], false);
    for o in 0..c {
        let v: f64 = (0..c).map(|i| ws[2].data()[o * c + i] * y.data()[i]).sum();
        assert!((out.data()[o] - (v + x.data()[o])).abs() <= 1e-14);
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(random(&[1, 3, 4, 4], 1));
    let y = g.constant(random(&[1, 3, 4, 5], 2));
    let w = g.constant(random(&[3, 3, 1, 1], 3));
    assert!(matches!(cross_attend(&mut g, x, y, w, w, w, false), Err(Error::Input(_))));
}

#[test]
fn module_runs_both_directions_with_separate_weights() {
    let mut store = ParamStore::<f64>::new();
    let xattn = CrossAttention::new(&mut store, &[2, 3, 4], &[1, 2], false, &mut rng(1)).unwrap();
    let names: Vec<&str> = store.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "xattn.s2.fwd.q", "xattn.s2.fwd.k", "xattn.s2.fwd.v", "xattn.s2.rev.q", "xattn.s2.rev.k", "xattn.s2.rev.v",
            "xattn.s3.fwd.q", "xattn.s3.fwd.k", "xattn.s3.fwd.v", "xattn.s3.rev.q", "xattn.s3.rev.k", "xattn.s3.rev.v",
        ]
    );
    let fwd = xattn.scales[1].1.fwd.clone();
    let rev = xattn.scales[1].1.rev.clone();
    let weight = |id| store.get(id).value.clone();
    let (fq, fk, fv) = (weight(fwd.q), weight(fwd.k), weight(fwd.v));
    let (rq, rk, rv) = (weight(rev.q), weight(rev.k), weight(rev.v));

    let mut ctx = Ctx::new(&mut store, BnMode::Eval);
    let sizes = [(2, 6), (3, 4), (4, 3)];
    let mut mk = |seed: u64, i: usize| ctx.input(random(&[1, sizes[i].0, sizes[i].1, sizes[i].1], seed + i as u64));
    let x = [mk(40, 0), mk(40, 1), mk(40, 2)];
    let y = [mk(50, 0), mk(50, 1), mk(50, 2)];
    let xs = ctx.graph.value(x[2]).clone();
    let ys = ctx.graph.value(y[2]).clone();
    let out = xattn.attend_all(&mut ctx, &ScaleFeatures { x, y }, &[2]).unwrap();
    assert_eq!(out.len(), 1);
    let (xa, ya) = out[0];
    assert!(ctx.graph.value(xa).max_abs_diff(&run(&xs, &ys, [&fq, &fk, &fv], false)) == 0.0);
    assert!(ctx.graph.value(ya).max_abs_diff(&run(&ys, &xs, [&rq, &rk, &rv], false)) == 0.0);

    let missing = xattn.attend_all(&mut ctx, &ScaleFeatures { x, y }, &[0]);
    assert!(matches!(missing, Err(Error::Config(_))));
}
