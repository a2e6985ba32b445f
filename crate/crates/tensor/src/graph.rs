//! Reverse-mode tape.
//!
//! Every operation appends a node holding its value and enough saved state
//! to compute vector-Jacobian products. Nodes are appended in evaluation
//! order, so walking the tape backwards from the loss is a valid reverse
//! topological order. One tape is single-threaded; build independent tapes
//! for parallel work.

use crate::error::{input_err, shape_err, Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::scalar::{gemm, MatMut, MatRef, Scalar};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Running mean/variance of a batch-norm layer plus its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> RunningStats<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(features: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); features],
            var: vec![T::one(); features],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Relu(Var),
    Scale(Var, T),
    Conv2d {
        x: Var,
        w: Var,
        batch: usize,
        geom: ConvGeom,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
        plane_in: usize,
        plane_out: usize,
    },
    AvgPoolGlobal {
        x: Var,
        plane: usize,
    },
    Bilinear {
        x: Var,
        planes: usize,
        h: usize,
        w: usize,
        out_h: usize,
        out_w: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        mode: BnMode,
    },
    SoftmaxRows(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        lse: Vec<T>,
        batch: usize,
        channels: usize,
        tokens: usize,
    },
    Concat {
        parts: Vec<Var>,
        outer: usize,
    },
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
///
/// Leaves the loss does not depend on receive zero gradients.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(TensorError::DimensionMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        });
    }
    Ok(())
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().any(|v| v.is_nan()) {
        return Err(TensorError::Numeric {
            op,
            reason: "NaN in input".into(),
        });
    }
    Ok(())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, false, Op::Leaf)
    }

    /// Leaf that receives a gradient in [`Graph::backward`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_node(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(value, requires_grad, op)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::DimensionMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            T::one(),
            MatRef::row_major(self.data(a), k),
            MatRef::row_major(self.data(b), n),
            T::zero(),
            MatMut::row_major(&mut out, n),
        );
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, &[a, b], Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("expected a matrix, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let value = Tensor::new(&[c, r], transpose_data(self.data(a), r, c))?;
        Ok(self.push(value, &[a], Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, &[a], Op::Reshape(a)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.shape(a), self.shape(b))?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, &[a, b], Op::Add(a, b)))
    }

    /// `x: [N, F] + bias: [F]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(TensorError::DimensionMismatch {
                op: "add_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let f = sb[0];
        let b = self.data(bias);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % f])
            .collect();
        let value = Tensor::new(self.shape(x), data)?;
        Ok(self.push(value, &[x, bias], Op::AddBias { x, bias }))
    }

    /// `x * factor`, elementwise.
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = T::of(factor);
        let value = self.value(x).map(|v| v * f);
        Ok(self.push(value, &[x], Op::Scale(x, f)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| v.max(T::zero()));
        Ok(self.push(value, &[x], Op::Relu(x)))
    }

    /// 2-D cross-correlation (no kernel flip), zero padding.
    ///
    /// `x` is `[C_in, H, W]` or `[N, C_in, H, W]`, `w` is
    /// `[C_out, C_in, kh, kw]`; output side is `(H + 2p - kh) / stride + 1`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        if self.shape(x).len() == 3 {
            let s = self.shape(x).to_vec();
            let x4 = self.reshape(x, &[1, s[0], s[1], s[2]])?;
            let y = self.conv2d(x4, w, stride, padding)?;
            let so = self.shape(y).to_vec();
            return self.reshape(y, &so[1..]);
        }
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(TensorError::DimensionMismatch {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be positive"));
        }
        let (kh, kw) = (sw[2], sw[3]);
        if kh > sx[2] + 2 * padding || kw > sx[3] + 2 * padding {
            return Err(shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {:?}", &sx[2..]),
            ));
        }
        let geom = ConvGeom {
            c_in: sx[1],
            h: sx[2],
            w: sx[3],
            c_out: sw[0],
            kh,
            kw,
            stride,
            pad: padding,
        };
        let out = kernels::conv2d_forward(self.data(x), sx[0], self.data(w), &geom);
        let value = Tensor::new(&[sx[0], geom.c_out, geom.out_h(), geom.out_w()], out)?;
        Ok(self.push(
            value,
            &[x, w],
            Op::Conv2d {
                x,
                w,
                batch: sx[0],
                geom,
            },
        ))
    }

    /// Max pooling over the last two axes, no padding.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 3 {
            return Err(shape_err("maxpool2d", format!("expected [..., H, W], got {s:?}")));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        if window == 0 || stride == 0 {
            return Err(shape_err("maxpool2d", "window and stride must be positive"));
        }
        if window > h || window > w {
            return Err(shape_err(
                "maxpool2d",
                format!("window {window} larger than input {h}x{w}"),
            ));
        }
        let planes = s[..s.len() - 2].iter().product();
        let (out, argmax) = kernels::maxpool_forward(self.data(x), planes, h, w, window, stride);
        let (ho, wo) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let mut shape = s[..s.len() - 2].to_vec();
        shape.extend([ho, wo]);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            &[x],
            Op::MaxPool {
                x,
                argmax,
                plane_in: h * w,
                plane_out: ho * wo,
            },
        ))
    }

    /// Mean over the last two axes: `[C, H, W] -> [C]`, `[N, C, H, W] -> [N, C]`.
    pub fn avgpool_global(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 3 {
            return Err(shape_err("avgpool_global", format!("expected [..., H, W], got {s:?}")));
        }
        let plane = s[s.len() - 2] * s[s.len() - 1];
        let inv = T::of(1.0 / plane as f64);
        let data = self
            .data(x)
            .chunks(plane)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let value = Tensor::new(&s[..s.len() - 2], data)?;
        Ok(self.push(value, &[x], Op::AvgPoolGlobal { x, plane }))
    }

    /// Bilinear resampling of the last two axes with align-corners = false.
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 3 {
            return Err(shape_err("bilinear_resize", format!("expected [..., H, W], got {s:?}")));
        }
        if out_h == 0 || out_w == 0 {
            return Err(shape_err("bilinear_resize", "output size must be positive"));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let planes = s[..s.len() - 2].iter().product();
        let out = kernels::bilinear_forward(self.data(x), planes, h, w, out_h, out_w);
        let mut shape = s[..s.len() - 2].to_vec();
        shape.extend([out_h, out_w]);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            &[x],
            Op::Bilinear {
                x,
                planes,
                h,
                w,
                out_h,
                out_w,
            },
        ))
    }

    /// Batch normalization over every axis except axis 1 (`[N, C]` or `[N, C, H, W]`).
    ///
    /// Train mode normalizes with biased batch statistics and folds the
    /// unbiased variance into `stats` with its momentum; eval mode uses
    /// `stats` unchanged.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: BnMode,
    ) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(shape_err("batchnorm", format!("expected [N, C, ...], got {s:?}")));
        }
        let (n, c) = (s[0], s[1]);
        let spatial: usize = s[2..].iter().product();
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [c] {
                return Err(shape_err(
                    "batchnorm",
                    format!("{name} shape {:?} does not match {c} channels", self.shape(v)),
                ));
            }
        }
        if stats.mean.len() != c || stats.var.len() != c {
            return Err(shape_err("batchnorm", "running stats do not match channel count"));
        }
        let eps = T::of(stats.eps);
        let xd = self.data(x);
        let (mean, inv_std) = match mode {
            BnMode::Train => {
                if n < 2 {
                    return Err(TensorError::Config(
                        "batchnorm in train mode needs a batch of at least 2".into(),
                    ));
                }
                let count = (n * spatial) as f64;
                let mut mean = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for sample in xd.chunks_exact(c * spatial) {
                    for (m, plane) in mean.iter_mut().zip(sample.chunks_exact(spatial)) {
                        *m += plane.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                for m in mean.iter_mut() {
                    *m /= count;
                }
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * spatial;
                        sq[ch] += xd[off..off + spatial]
                            .iter()
                            .map(|v| (v.as_f64() - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                }
                let mom = stats.momentum;
                let mut inv = Vec::with_capacity(c);
                for ch in 0..c {
                    let var = sq[ch] / count;
                    let unbiased = sq[ch] / (count - 1.0);
                    stats.mean[ch] =
                        T::of((1.0 - mom) * stats.mean[ch].as_f64() + mom * mean[ch]);
                    stats.var[ch] = T::of((1.0 - mom) * stats.var[ch].as_f64() + mom * unbiased);
                    inv.push(T::one() / (T::of(var) + eps).sqrt());
                }
                (mean.into_iter().map(T::of).collect::<Vec<_>>(), inv)
            }
            BnMode::Eval => (
                stats.mean.clone(),
                stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect(),
            ),
        };
        let (g, bt) = (self.data(gamma), self.data(beta));
        let mut out = Vec::with_capacity(xd.len());
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * spatial;
                let scale = g[ch] * inv_std[ch];
                let shift = bt[ch] - mean[ch] * scale;
                out.extend(xd[off..off + spatial].iter().map(|&v| v * scale + shift));
            }
        }
        let value = Tensor::new(&s, out)?;
        Ok(self.push(
            value,
            &[x, gamma, beta],
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                mode,
            },
        ))
    }

    /// Row-wise softmax of a matrix with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(shape_err("softmax_rows", format!("expected a matrix, got {s:?}")));
        }
        check_finite("softmax_rows", self.data(x))?;
        let mut data = self.data(x).to_vec();
        kernels::softmax_rows_inplace(&mut data, s[1]);
        let value = Tensor::new(&s, data)?;
        Ok(self.push(value, &[x], Op::SoftmaxRows(x)))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(input_err(
                "cross_entropy",
                format!("logits {s:?} do not match {} labels", labels.len()),
            ));
        }
        let classes = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(input_err(
                "cross_entropy",
                format!("label {bad} outside 0..{classes}"),
            ));
        }
        check_finite("cross_entropy", self.data(logits))?;
        let mut probs = self.data(logits).to_vec();
        kernels::softmax_rows_inplace(&mut probs, classes);
        let mut total = 0.0f64;
        for (row, &label) in self.data(logits).chunks(classes).zip(labels) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
            total += lse - row[label].as_f64();
        }
        let value = Tensor::scalar(T::of(total / labels.len() as f64));
        Ok(self.push(
            value,
            &[logits],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Spatial-token attention `(softmax_rows(Q K^T) V)^T` without scaling.
    ///
    /// Inputs are `[C, H, W]` or `[N, C, H, W]` maps; each is flattened to
    /// `H*W` tokens (row-major, H then W) with `C` features. Returns the same
    /// shape as `q`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let s = self.shape(q).to_vec();
        same_shape("attention", &s, self.shape(k))?;
        same_shape("attention", &s, self.shape(v))?;
        let (batch, channels, tokens) = match s.len() {
            3 => (1, s[0], s[1] * s[2]),
            4 => (s[0], s[1], s[2] * s[3]),
            _ => return Err(shape_err("attention", format!("expected a feature map, got {s:?}"))),
        };
        let len = channels * tokens;
        let mut out = Vec::with_capacity(batch * len);
        let mut lse = Vec::with_capacity(batch * tokens);
        for b in 0..batch {
            let r = b * len..(b + 1) * len;
            let (o, l) = kernels::attention_forward(
                &self.data(q)[r.clone()],
                &self.data(k)[r.clone()],
                &self.data(v)[r],
                channels,
                tokens,
            );
            out.extend(o);
            lse.extend(l);
        }
        let value = Tensor::new(&s, out)?;
        Ok(self.push(
            value,
            &[q, k, v],
            Op::Attention {
                q,
                k,
                v,
                lse,
                batch,
                channels,
                tokens,
            },
        ))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| input_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len()
                || s[..axis] != base[..axis]
                || s[axis + 1..] != base[axis + 1..]
            {
                return Err(TensorError::DimensionMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut data = Vec::new();
        for o in 0..outer {
            for &p in parts {
                let block: usize = self.shape(p)[axis..].iter().product();
                data.extend_from_slice(&self.data(p)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(
            value,
            parts,
            Op::Concat {
                parts: parts.to_vec(),
                outer,
            },
        ))
    }

    /// Scalar `sum(x * weights)`; the probe used by gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        same_shape("weighted_sum", self.shape(x), weights.shape())?;
        let total: f64 = self
            .data(x)
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        let value = Tensor::scalar(T::of(total));
        Ok(self.push(
            value,
            &[x],
            Op::WeightedSum {
                x,
                weights: weights.data().to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        MatRef::row_major(gd, n),
                        MatRef::transposed(self.data(*b), n),
                        T::zero(),
                        MatMut::row_major(&mut da, k),
                    );
                    self.accumulate(grads, *a, Tensor::new(sa, da)?);
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        MatRef::transposed(self.data(*a), k),
                        MatRef::row_major(gd, n),
                        T::zero(),
                        MatMut::row_major(&mut db, n),
                    );
                    self.accumulate(grads, *b, Tensor::new(sb, db)?);
                }
            }
            Op::Transpose(a) => {
                let s = g.shape();
                let da = transpose_data(gd, s[0], s[1]);
                self.accumulate(grads, *a, Tensor::new(self.shape(*a), da)?);
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, g.clone().reshape(self.shape(*a))?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias { x, bias } => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*bias) {
                    let f = self.shape(*bias)[0];
                    let mut db = vec![T::zero(); f];
                    for row in gd.chunks(f) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(&[f], db)?);
                }
            }
            Op::Relu(x) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
            Op::Scale(x, f) => {
                self.accumulate(grads, *x, g.map(|d| d * *f));
            }
            Op::Conv2d { x, w, batch, geom } => {
                let mut dx = self.wants(*x).then(|| vec![T::zero(); self.value(*x).numel()]);
                let mut dw = self.wants(*w).then(|| vec![T::zero(); self.value(*w).numel()]);
                kernels::conv2d_backward(
                    self.data(*x),
                    *batch,
                    self.data(*w),
                    geom,
                    gd,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, Tensor::new(self.shape(*w), dw)?);
                }
            }
            Op::MaxPool {
                x,
                argmax,
                plane_in,
                plane_out,
            } => {
                let mut dx = vec![T::zero(); self.value(*x).numel()];
                for (i, (&d, &a)) in gd.iter().zip(argmax).enumerate() {
                    dx[(i / plane_out) * plane_in + a as usize] += d;
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
            Op::AvgPoolGlobal { x, plane } => {
                let inv = T::of(1.0 / *plane as f64);
                let dx = gd
                    .iter()
                    .flat_map(|&d| std::iter::repeat_n(d * inv, *plane))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
            Op::Bilinear {
                x,
                planes,
                h,
                w,
                out_h,
                out_w,
            } => {
                let dx = kernels::bilinear_backward(gd, *planes, *h, *w, *out_h, *out_w);
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                mode,
            } => {
                let s = self.shape(*x);
                let (n, c) = (s[0], s[1]);
                let spatial: usize = s[2..].iter().product();
                let xd = self.data(*x);
                let gam = self.data(*gamma);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * spatial;
                        for i in off..off + spatial {
                            let xhat = (xd[i] - mean[ch]) * inv_std[ch];
                            dgamma[ch] += gd[i] * xhat;
                            dbeta[ch] += gd[i];
                        }
                    }
                }
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); xd.len()];
                    let count = T::of((n * spatial) as f64);
                    for b in 0..n {
                        for ch in 0..c {
                            let off = (b * c + ch) * spatial;
                            for i in off..off + spatial {
                                dx[i] = match mode {
                                    BnMode::Eval => gd[i] * gam[ch] * inv_std[ch],
                                    BnMode::Train => {
                                        // dbeta = sum(dy), dgamma = sum(dy * xhat)
                                        let xhat = (xd[i] - mean[ch]) * inv_std[ch];
                                        gam[ch] * inv_std[ch] / count
                                            * (count * gd[i] - dbeta[ch] - xhat * dgamma[ch])
                                    }
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(s, dx)?);
                }
                self.accumulate(grads, *gamma, Tensor::new(&[c], dgamma)?);
                self.accumulate(grads, *beta, Tensor::new(&[c], dbeta)?);
            }
            Op::SoftmaxRows(x) => {
                let cols = node.value.shape()[1];
                let mut dx = Vec::with_capacity(gd.len());
                for (y, d) in node.value.data().chunks(cols).zip(gd.chunks(cols)) {
                    let dot: T = y.iter().zip(d).map(|(&a, &b)| a * b).sum();
                    dx.extend(y.iter().zip(d).map(|(&a, &b)| a * (b - dot)));
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let classes = self.shape(*logits)[1];
                let scale = gd[0] / T::of(labels.len() as f64);
                let mut dl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    dl[row * classes + label] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::new(self.shape(*logits), dl)?);
            }
            Op::Attention {
                q,
                k,
                v,
                lse,
                batch,
                channels,
                tokens,
            } => {
                let len = channels * tokens;
                let total = batch * len;
                let (mut dq, mut dk, mut dv) =
                    (vec![T::zero(); total], vec![T::zero(); total], vec![T::zero(); total]);
                for b in 0..*batch {
                    let r = b * len..(b + 1) * len;
                    kernels::attention_backward(
                        &self.data(*q)[r.clone()],
                        &self.data(*k)[r.clone()],
                        &self.data(*v)[r.clone()],
                        &node.value.data()[r.clone()],
                        &lse[b * tokens..(b + 1) * tokens],
                        &gd[r.clone()],
                        *channels,
                        *tokens,
                        &mut dq[r.clone()],
                        &mut dk[r.clone()],
                        &mut dv[r],
                    );
                }
                let s = node.value.shape();
                self.accumulate(grads, *q, Tensor::new(s, dq)?);
                self.accumulate(grads, *k, Tensor::new(s, dk)?);
                self.accumulate(grads, *v, Tensor::new(s, dv)?);
            }
            Op::Concat { parts, outer } => {
                let blocks: Vec<usize> = parts
                    .iter()
                    .map(|&p| self.value(p).numel() / outer)
                    .collect();
                let row: usize = blocks.iter().sum();
                for (pi, &p) in parts.iter().enumerate() {
                    if !self.wants(p) {
                        continue;
                    }
                    let start: usize = blocks[..pi].iter().sum();
                    let mut dp = Vec::with_capacity(self.value(p).numel());
                    for o in 0..*outer {
                        dp.extend_from_slice(&gd[o * row + start..o * row + start + blocks[pi]]);
                    }
                    self.accumulate(grads, p, Tensor::new(self.shape(p), dp)?);
                }
            }
            Op::WeightedSum { x, weights } => {
                let dx = weights.iter().map(|&w| w * gd[0]).collect();
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), dx)?);
            }
        }
        Ok(())
    }
}

fn transpose_data<T: Copy>(d: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(d.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(d[r * cols + c]);
        }
    }
    out
}
