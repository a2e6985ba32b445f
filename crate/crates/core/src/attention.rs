//! Spatial cross-attention between the two branches at each scale.
//!
//! Tokens are the `H*W` positions in row-major order with the `C` channels
//! as features; rows of `Q K^T` are softmax-normalized over keys.

use rand::Rng;
use recap_tensor::{fan_in_uniform, Graph, ParamId, ParamStore, Scalar, Var};

use crate::backbone::ScaleFeatures;
use crate::error::{Error, Result};
use crate::nn::Ctx;

/// `softmax_rows(q k^T) v + x` with `q = x*wq`, `k = y*wk`, `v = y*wv`
/// (1x1 convolutions, `w: [C, C, 1, 1]`). `x`, `y` are `[C, H, W]` or
/// `[N, C, H, W]`. With `scale_logits` the queries are divided by `sqrt(C)`.
pub fn cross_attend<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    y: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    scale_logits: bool,
) -> Result<Var> {
    if g.shape(x) != g.shape(y) {
        return Err(Error::Input(format!(
            "cross-attention inputs differ: {:?} vs {:?}",
            g.shape(x),
            g.shape(y)
        )));
    }
    let mut q = g.conv2d(x, wq, 1, 0)?;
    let k = g.conv2d(y, wk, 1, 0)?;
    let v = g.conv2d(y, wv, 1, 0)?;
    if scale_logits {
        let s = g.shape(x);
        let channels = s[s.len() - 3];
        q = g.scale(q, 1.0 / (channels as f64).sqrt())?;
    }
    let attended = g.attention(q, k, v)?;
    Ok(g.add(attended, x)?)
}

/// Query/key/value kernels for one scale and one direction.
#[derive(Clone, Debug)]
pub struct AttnWeights {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
}

impl AttnWeights {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut R) -> Result<Self> {
        let mut one = |role: &str| {
            let w = fan_in_uniform(&[channels, channels, 1, 1], channels, rng);
            store.add(&format!("{name}.{role}"), w, true)
        };
        Ok(AttnWeights {
            q: one("q")?,
            k: one("k")?,
            v: one("v")?,
        })
    }

    pub fn apply<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var, y: Var, scale_logits: bool) -> Result<Var> {
        let (wq, wk, wv) = (ctx.param(self.q), ctx.param(self.k), ctx.param(self.v));
        cross_attend(&mut ctx.graph, x, y, wq, wk, wv, scale_logits)
    }
}

/// Forward (`x` attends to `y`) and reverse weight sets for one scale.
#[derive(Clone, Debug)]
pub struct ScaleAttention {
    pub fwd: AttnWeights,
    pub rev: AttnWeights,
}

/// Cross-attention at a chosen subset of scales (0-based, shallowest first).
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub scales: Vec<(usize, ScaleAttention)>,
    pub scale_logits: bool,
}

impl CrossAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        channels: &[usize; 3],
        scales: &[usize],
        scale_logits: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut out = Vec::with_capacity(scales.len());
        for &s in scales {
            let c = *channels
                .get(s)
                .ok_or_else(|| Error::Config(format!("scale index {s} out of range")))?;
            let name = format!("xattn.s{}", s + 1);
            out.push((
                s,
                ScaleAttention {
                    fwd: AttnWeights::new(store, &format!("{name}.fwd"), c, rng)?,
                    rev: AttnWeights::new(store, &format!("{name}.rev"), c, rng)?,
                },
            ));
        }
        Ok(CrossAttention {
            scales: out,
            scale_logits,
        })
    }

    /// `(X_i^a, Y_i^a)` for each requested scale, in the order given.
    pub fn attend_all<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, f: &ScaleFeatures, scales: &[usize]) -> Result<Vec<(Var, Var)>> {
        scales
            .iter()
            .map(|&s| {
                let (_, w) = self
                    .scales
                    .iter()
                    .find(|(i, _)| *i == s)
                    .ok_or_else(|| Error::Config(format!("no cross-attention weights for scale {}", s + 1)))?;
                let xa = w.fwd.apply(ctx, f.x[s], f.y[s], self.scale_logits)?;
                let ya = w.rev.apply(ctx, f.y[s], f.x[s], self.scale_logits)?;
                Ok((xa, ya))
            })
            .collect()
    }
}
