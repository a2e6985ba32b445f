#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use recap_tensor::{Graph, Result, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Compare tape gradients against central finite differences (step `h`)
/// of `sum(f(inputs) * probe)` for a fixed random probe. Returns the worst
/// relative error over all inputs.
pub fn gradcheck<F>(f: F, inputs: &[Tensor<f64>], probe_seed: u64, h: f64) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
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
        let gs = vars.iter().map(|&v| grads.get(v).unwrap().data().to_vec()).collect();
        (value, gs)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(input.numel());
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            numeric.push((eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h));
        }
        worst = worst.max(rel_err(&analytic[i], &numeric));
    }
    worst
}

/// Naive `[C_out, H', W']` cross-correlation of one `[C_in, H, W]` sample.
pub fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Vec<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; co * ho * wo];
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for c in 0..ci {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                acc += x.at(&[c, iy as usize, ix as usize]) * w.at(&[o, c, ky, kx]);
                            }
                        }
                    }
                }
                out[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

/// Bilinear sample of one plane at continuous source coordinate with
/// edge clamping, align-corners-false mapping.
pub fn bilinear_oracle(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let pixel = |y: isize, x: isize| -> f64 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        plane[y * w + x]
    };
    let mut out = Vec::new();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let sy = f64::max(0.0, (oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5);
            let sx = f64::max(0.0, (ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5);
            let (fy, fx) = (sy.floor(), sx.floor());
            let (ty, tx) = (sy - fy, sx - fx);
            let (y0, x0) = (fy as isize, fx as isize);
            let v = (1.0 - ty) * ((1.0 - tx) * pixel(y0, x0) + tx * pixel(y0, x0 + 1))
                + ty * ((1.0 - tx) * pixel(y0 + 1, x0) + tx * pixel(y0 + 1, x0 + 1));
            out.push(v);
        }
    }
    out
}

/// Per-token loop for `softmax((x wq)(y wk)^T)(y wv)` without the residual.
/// Inputs are already-projected `[C, H, W]` maps.
pub fn attention_oracle(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>) -> Vec<f64> {
    let c = q.shape()[0];
    let t = q.shape()[1] * q.shape()[2];
    let qd = q.data();
    let kd = k.data();
    let vd = v.data();
    let mut out = vec![0.0; c * t];
    for i in 0..t {
        let logits: Vec<f64> = (0..t)
            .map(|j| (0..c).map(|ch| qd[ch * t + i] * kd[ch * t + j]).sum())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        for ch in 0..c {
            out[ch * t + i] = (0..t).map(|j| weights[j] / z * vd[ch * t + j]).sum();
        }
    }
    out
}
