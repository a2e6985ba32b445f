//! Per-scale concat + downsample to a fixed grid, then pooled head.

use rand::Rng;
use recap_tensor::{Graph, ParamStore, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Ctx, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DownsampleOrder {
    /// Max pool with window = stride = `floor(H / S)`, then bilinear to `S`.
    #[default]
    PoolThenResize,
    /// Bilinear to `S * floor(H / S)`, then the same max pool.
    ResizeThenPool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub s_x: usize,
    pub s_y: usize,
    pub n_scales: usize,
    pub hidden_nodes: usize,
    pub classes: usize,
    #[serde(default)]
    pub downsample: DownsampleOrder,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            s_x: 7,
            s_y: 7,
            n_scales: 3,
            hidden_nodes: 256,
            classes: 2,
            downsample: DownsampleOrder::PoolThenResize,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n_scales) {
            return Err(Error::Config(format!("n_scales must be 1, 2 or 3, got {}", self.n_scales)));
        }
        if self.s_x == 0 || self.s_y == 0 || self.hidden_nodes == 0 || self.classes < 2 {
            return Err(Error::Config("fusion grid, hidden width and class count must be positive".into()));
        }
        Ok(())
    }

    /// 0-based scale indices in use, deepest `n_scales` kept, shallowest first.
    pub fn scale_indices(&self) -> Vec<usize> {
        (3 - self.n_scales.min(3)..3).collect()
    }
}

/// Downsample a `[.., H, W]` map to `[.., s_y, s_x]` per `order`.
pub fn downsample<T: Scalar>(g: &mut Graph<T>, x: Var, s_y: usize, s_x: usize, order: DownsampleOrder) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s.len() < 3 {
        return Err(Error::Shape(format!("downsample expects [.., H, W], got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    if h < s_y || w < s_x {
        return Err(Error::Shape(format!("feature map {h}x{w} is smaller than the {s_y}x{s_x} grid")));
    }
    let window = (h / s_y).min(w / s_x);
    Ok(match order {
        DownsampleOrder::PoolThenResize => {
            let p = g.maxpool2d(x, window, window)?;
            g.bilinear_resize(p, s_y, s_x)?
        }
        DownsampleOrder::ResizeThenPool => {
            let r = g.bilinear_resize(x, s_y * window, s_x * window)?;
            g.maxpool2d(r, window, window)?
        }
    })
}

/// `Downsample(Concat(x_a, y_a))` along the channel axis.
pub fn fuse_scale<T: Scalar>(g: &mut Graph<T>, x_a: Var, y_a: Var, cfg: &FusionConfig) -> Result<Var> {
    let rank = g.shape(x_a).len();
    if !(rank == 3 || rank == 4) {
        return Err(Error::Shape(format!("fuse_scale expects a feature map, got {:?}", g.shape(x_a))));
    }
    let cat = g.concat(&[x_a, y_a], rank - 3)?;
    downsample(g, cat, cfg.s_y, cfg.s_x, cfg.downsample)
}

/// Pooled-vector batch norm and the two-layer MLP.
#[derive(Clone, Debug)]
pub struct Head {
    pub bn: BatchNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Head {
    /// The output layer starts at zero so a fresh model is uninformed.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        pooled: usize,
        cfg: &FusionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Head {
            bn: BatchNorm::new(store, "fusion.bn", pooled)?,
            fc1: Linear::new(store, "head.fc1", pooled, cfg.hidden_nodes, rng)?,
            fc2: Linear::zeroed(store, "head.fc2", cfg.hidden_nodes, cfg.classes)?,
        })
    }

    /// `[N, F]` pooled features to `[N, classes]` logits.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, pooled: Var) -> Result<Var> {
        let h = self.bn.forward(ctx, pooled)?;
        let h = self.fc1.forward(ctx, h)?;
        let h = ctx.graph.relu(h)?;
        self.fc2.forward(ctx, h)
    }
}

/// Concat of all fused scales (`[N, 2*sum C_i, s_y, s_x]`), globally pooled
/// to `[N, 2*sum C_i]`.
pub fn fuse_and_pool<T: Scalar>(g: &mut Graph<T>, attended: &[(Var, Var)], cfg: &FusionConfig) -> Result<Var> {
    if attended.len() != cfg.n_scales {
        return Err(Error::Config(format!(
            "fusion configured for {} scales but got {}",
            cfg.n_scales,
            attended.len()
        )));
    }
    let fused = attended
        .iter()
        .map(|&(xa, ya)| fuse_scale(g, xa, ya, cfg))
        .collect::<Result<Vec<_>>>()?;
    let axis = g.shape(fused[0]).len() - 3;
    let all = g.concat(&fused, axis)?;
    Ok(g.avgpool_global(all)?)
}

pub fn fuse_and_classify<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    attended: &[(Var, Var)],
    cfg: &FusionConfig,
    head: &Head,
) -> Result<Var> {
    let pooled = fuse_and_pool(&mut ctx.graph, attended, cfg)?;
    head.forward(ctx, pooled)
}
