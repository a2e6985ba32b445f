//! The full detector and its ablation variants.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use recap_tensor::{ParamStore, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::attention::CrossAttention;
use crate::backbone::{BackboneConfig, Backbone, Branch};
use crate::error::{Error, Result};
use crate::fusion::{fuse_and_classify, FusionConfig, Head};
use crate::nn::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Band-image branch and head only.
    Branch1,
    /// Both branches fused at three scales without cross-attention.
    BaseFusion,
    /// Both branches with cross-attention at the deepest `n` scales.
    Proposed(usize),
}

impl Variant {
    /// Ablation table order.
    pub const ALL: [Variant; 5] = [
        Variant::Branch1,
        Variant::BaseFusion,
        Variant::Proposed(1),
        Variant::Proposed(2),
        Variant::Proposed(3),
    ];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Branch1 => write!(f, "branch1"),
            Variant::BaseFusion => write!(f, "base-fusion"),
            Variant::Proposed(n) => write!(f, "proposed({n}scale)"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "branch1" => Ok(Variant::Branch1),
            "base-fusion" => Ok(Variant::BaseFusion),
            "proposed(1scale)" => Ok(Variant::Proposed(1)),
            "proposed(2scale)" => Ok(Variant::Proposed(2)),
            "proposed(3scale)" => Ok(Variant::Proposed(3)),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture flags that fix the parameter layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub fusion: FusionConfig,
    pub xattn_enabled: bool,
    #[serde(default)]
    pub branch1_only: bool,
    #[serde(default)]
    pub scale_logits: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::tiny(),
            fusion: FusionConfig::default(),
            xattn_enabled: true,
            branch1_only: false,
            scale_logits: false,
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: Variant, backbone: BackboneConfig) -> Self {
        let mut cfg = ModelConfig {
            backbone,
            ..ModelConfig::default()
        };
        cfg.set_variant(variant);
        cfg
    }

    pub fn set_variant(&mut self, variant: Variant) {
        match variant {
            Variant::Branch1 => {
                self.branch1_only = true;
                self.xattn_enabled = false;
                self.fusion.n_scales = 1;
            }
            Variant::BaseFusion => {
                self.branch1_only = false;
                self.xattn_enabled = false;
                self.fusion.n_scales = 3;
            }
            Variant::Proposed(n) => {
                self.branch1_only = false;
                self.xattn_enabled = true;
                self.fusion.n_scales = n;
            }
        }
    }

    pub fn variant(&self) -> Variant {
        match (self.branch1_only, self.xattn_enabled) {
            (true, _) => Variant::Branch1,
            (false, false) => Variant::BaseFusion,
            (false, true) => Variant::Proposed(self.fusion.n_scales),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.fusion.validate()?;
        if self.branch1_only && self.xattn_enabled {
            return Err(Error::Config("branch1-only model cannot use cross-attention".into()));
        }
        let sides = self.backbone.scale_sides();
        for s in self.fusion.scale_indices() {
            if sides[s] < self.fusion.s_x.max(self.fusion.s_y) {
                return Err(Error::Config(format!(
                    "input side {} gives a {}x{} map at scale {}, below the fusion grid",
                    self.backbone.input_side,
                    sides[s],
                    sides[s],
                    s + 1
                )));
            }
        }
        Ok(())
    }

    /// Length of the vector entering the head.
    pub fn pooled_len(&self) -> usize {
        let c = self.backbone.stage_channels;
        if self.branch1_only {
            c[2]
        } else {
            2 * self.fusion.scale_indices().iter().map(|&s| c[s]).sum::<usize>()
        }
    }
}

enum Body {
    Branch1(Branch),
    Fused {
        backbone: Backbone,
        xattn: Option<CrossAttention>,
    },
}

pub struct Detector {
    cfg: ModelConfig,
    body: Body,
    head: Head,
}

impl Detector {
    /// Register every parameter in `store` and return the wiring.
    pub fn new<T: Scalar, R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let body = if cfg.branch1_only {
            Body::Branch1(Branch::new(store, "b1", &cfg.backbone, rng)?)
        } else {
            let backbone = Backbone::new(store, &cfg.backbone, rng)?;
            let xattn = if cfg.xattn_enabled {
                Some(CrossAttention::new(
                    store,
                    &cfg.backbone.stage_channels,
                    &cfg.fusion.scale_indices(),
                    cfg.scale_logits,
                    rng,
                )?)
            } else {
                None
            };
            Body::Fused { backbone, xattn }
        };
        let head = Head::new(store, cfg.pooled_len(), &cfg.fusion, rng)?;
        Ok(Detector {
            cfg: cfg.clone(),
            body,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Logits `[N, classes]` for band and RGB batches `[N, 3, S, S]`.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, band: Var, rgb: Var) -> Result<Var> {
        match &self.body {
            Body::Branch1(branch) => {
                let taps = branch.forward(ctx, band)?;
                let pooled = ctx.graph.avgpool_global(taps[2])?;
                self.head.forward(ctx, pooled)
            }
            Body::Fused { backbone, xattn } => {
                let feats = backbone.extract(ctx, band, rgb)?;
                let scales = self.cfg.fusion.scale_indices();
                let attended = match xattn {
                    Some(x) => x.attend_all(ctx, &feats, &scales)?,
                    None => scales.iter().map(|&s| (feats.x[s], feats.y[s])).collect(),
                };
                fuse_and_classify(ctx, &attended, &self.cfg.fusion, &self.head)
            }
        }
    }
}

/// Number of trainable scalars.
pub fn trainable_params<T: Scalar>(store: &ParamStore<T>) -> usize {
    store.iter().filter(|p| p.requires_grad).map(|p| p.value.numel()).sum()
}
