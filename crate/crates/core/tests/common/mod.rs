#![allow(dead_code)]

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recap_tensor::{Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Worst relative error between tape gradients and central differences of
/// `sum(f(inputs) * probe)` over every input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], probe_seed: u64, h: f64) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> recap_core::Result<Var>,
{
    let eval = |vals: &[Tensor<f64>], with_grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals
            .iter()
            .map(|t| if with_grad { g.leaf(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let out = f(&mut g, &vars).expect("forward");
        let probe = Tensor::uniform(g.shape(out), -1.0, 1.0, &mut rng(probe_seed));
        let loss = g.weighted_sum(out, &probe).expect("probe");
        let value = g.value(loss).data()[0];
        if !with_grad {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).expect("backward");
        (value, vars.iter().map(|&v| grads.get(v).unwrap().data().to_vec()).collect())
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let numeric: Vec<f64> = (0..input.numel())
            .map(|j| {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= h;
                (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(&analytic[i], &numeric));
    }
    worst
}

/// Direct per-token cross-attention on one `[C, H, W]` sample:
/// `out_i = sum_j softmax_j(q_i . k_j) v_j + x_i` with 1x1 projections.
#[allow(clippy::too_many_arguments)]
pub fn attention_oracle(x: &[f64], y: &[f64], c: usize, t: usize, wq: &[f64], wk: &[f64], wv: &[f64], scale: bool) -> Vec<f64> {
    let proj = |w: &[f64], src: &[f64], tok: usize| -> Vec<f64> {
        (0..c)
            .map(|o| (0..c).map(|i| w[o * c + i] * src[i * t + tok]).sum())
            .collect()
    };
    let s = if scale { 1.0 / (c as f64).sqrt() } else { 1.0 };
    let mut out = x.to_vec();
    for i in 0..t {
        let q = proj(wq, x, i);
        let logits: Vec<f64> = (0..t)
            .map(|j| {
                let k = proj(wk, y, j);
                s * q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for (j, ej) in e.iter().enumerate() {
            let v = proj(wv, y, j);
            for ch in 0..c {
                out[ch * t + i] += ej / z * v[ch];
            }
        }
    }
    out
}

/// Direct O(n^4) orthonormal DCT-II.
pub fn dct_oracle(x: &[f64], n: usize) -> Vec<f64> {
    let a = |u: usize| if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let pi = std::f64::consts::PI;
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += x[i * n + j]
                        * (pi * (2 * i + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                        * (pi * (2 * j + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                }
            }
            out[u * n + v] = a(u) * a(v) * s;
        }
    }
    out
}

pub fn random_rgb(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]))
}


pub fn acc_oracle(s: &[f64], l: &[u8], t: f64) -> f64 {
    let mut hits = 0;
    for i in 0..s.len() {
        let predicted = if s[i] >= t { 1 } else { 0 };
        if predicted == l[i] {
            hits += 1;
        }
    }
    100.0 * hits as f64 / s.len() as f64
}

pub fn auc_oracle(s: &[f64], l: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1 && l[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    100.0 * num / pairs
}

pub fn rates_oracle(s: &[f64], l: &[u8], t: f64) -> (f64, f64) {
    let neg: Vec<f64> = (0..s.len()).filter(|&i| l[i] == 0).map(|i| s[i]).collect();
    let pos: Vec<f64> = (0..s.len()).filter(|&i| l[i] == 1).map(|i| s[i]).collect();
    let far = neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64;
    let frr = pos.iter().filter(|&&v| v < t).count() as f64 / pos.len() as f64;
    (far, frr)
}

pub fn eer_oracle(s: &[f64], l: &[u8]) -> (f64, f64) {
    let mut distinct = s.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut candidates = vec![distinct[0]];
    for w in distinct.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for t in candidates {
        let (far, frr) = rates_oracle(s, l, t);
        let gap = (far - frr).abs();
        if best.is_none_or(|b| gap < b.0) {
            best = Some((gap, (far + frr) * 50.0, t));
        }
    }
    let b = best.unwrap();
    (b.1, b.2)
}

pub fn ap_oracle(s: &[f64], l: &[u8]) -> f64 {
    // stable descending ranking, then the literal precision/recall curve
    let mut idx: Vec<usize> = (0..s.len()).collect();
    for a in 0..idx.len() {
        for b in 0..idx.len() - 1 - a {
            if s[idx[b]] < s[idx[b + 1]] {
                idx.swap(b, b + 1);
            }
        }
    }
    let total = l.iter().filter(|&&v| v == 1).count() as f64;
    let mut curve = vec![(0.0, 1.0)];
    let mut tp = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if l[i] == 1 {
            tp += 1.0;
        }
        curve.push((tp / total, tp / (k + 1) as f64));
    }
    100.0 * curve.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum::<f64>()
}

pub fn hter_oracle(s: &[f64], l: &[u8], t: f64) -> f64 {
    let (far, frr) = rates_oracle(s, l, t);
    50.0 * (far + frr)
}

/// Scores on a coarse grid so ties are common.
pub fn metric_instance(seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=50);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let grid = if seed.is_multiple_of(2) { 10.0 } else { 1e6 };
    let scores = (0..n).map(|_| (rng.gen::<f64>() * grid).round() / grid).collect();
    (scores, labels)
}
