//! Two weight-independent residual CNN branches with taps after each of
//! three stages.

use rand::Rng;
use recap_tensor::{ParamStore, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{expect_rank, BatchNorm, Conv, Ctx};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 3],
    pub blocks_per_stage: [usize; 3],
    pub input_side: usize,
    pub preset_name: String,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

impl BackboneConfig {
    pub fn tiny() -> Self {
        BackboneConfig {
            stage_channels: [16, 32, 64],
            blocks_per_stage: [2, 2, 2],
            input_side: 224,
            preset_name: "tiny".into(),
        }
    }

    /// Width and depth of the last three residual stages of a ResNet-50,
    /// built from basic blocks and randomly initialized.
    pub fn resnet50() -> Self {
        BackboneConfig {
            stage_channels: [512, 1024, 2048],
            blocks_per_stage: [4, 6, 3],
            input_side: 224,
            preset_name: "resnet50".into(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "resnet50" => Ok(Self::resnet50()),
            other => Err(Error::Config(format!("unknown backbone preset {other:?}"))),
        }
    }

    /// Spatial side after the stem and after each stage.
    pub fn scale_sides(&self) -> [usize; 3] {
        // stem: 3x3 stride-2 conv (ceil halving), then 2x2 max pool (floor)
        let stem = self.input_side.div_ceil(2) / 2;
        let s2 = stem.div_ceil(2);
        [stem, s2, s2.div_ceil(2)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) || self.blocks_per_stage.contains(&0) {
            return Err(Error::Config("backbone channels and block counts must be positive".into()));
        }
        if self.input_side < 4 {
            return Err(Error::Config(format!("input side {} is too small", self.input_side)));
        }
        Ok(())
    }
}

/// conv-bn-relu-conv-bn plus shortcut, then relu.
#[derive(Clone, Debug)]
struct BasicBlock {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
}

impl BasicBlock {
    fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let shortcut = if stride != 1 || c_in != c_out {
            Some((
                Conv::new(store, &format!("{name}.down.conv"), c_in, c_out, 1, stride, 0, rng)?,
                BatchNorm::new(store, &format!("{name}.down.bn"), c_out)?,
            ))
        } else {
            None
        };
        Ok(BasicBlock {
            conv1: Conv::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, 1, rng)?,
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), c_out)?,
            conv2: Conv::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1, rng)?,
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), c_out)?,
            shortcut,
        })
    }

    fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.graph.relu(h)?;
        let h = self.conv2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)?
            }
            None => x,
        };
        let sum = ctx.graph.add(h, skip)?;
        Ok(ctx.graph.relu(sum)?)
    }
}

/// One backbone branch over a 3-channel input.
#[derive(Clone, Debug)]
pub struct Branch {
    stem_conv: Conv,
    stem_bn: BatchNorm,
    stages: Vec<Vec<BasicBlock>>,
}

impl Branch {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cfg: &BackboneConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.stage_channels;
        let stem_conv = Conv::new(store, &format!("{prefix}.stem.conv"), 3, c[0], 3, 2, 1, rng)?;
        let stem_bn = BatchNorm::new(store, &format!("{prefix}.stem.bn"), c[0])?;
        let mut stages = Vec::with_capacity(3);
        let mut c_in = c[0];
        for (s, (&c_out, &blocks)) in c.iter().zip(&cfg.blocks_per_stage).enumerate() {
            let mut stage = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let name = format!("{prefix}.s{}.{b}", s + 1);
                stage.push(BasicBlock::new(store, &name, c_in, c_out, stride, rng)?);
                c_in = c_out;
            }
            stages.push(stage);
        }
        Ok(Branch {
            stem_conv,
            stem_bn,
            stages,
        })
    }

    /// `[N, 3, S, S]` to the three stage outputs, shallowest first.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<[Var; 3]> {
        let s = ctx.graph.shape(x).to_vec();
        expect_rank(&s, 4, "backbone input")?;
        if s[1] != 3 {
            return Err(Error::Input(format!("backbone expects 3 input channels, got {s:?}")));
        }
        let h = self.stem_conv.forward(ctx, x)?;
        let h = self.stem_bn.forward(ctx, h)?;
        let h = ctx.graph.relu(h)?;
        let mut h = ctx.graph.maxpool2d(h, 2, 2)?;
        let mut taps = Vec::with_capacity(3);
        for stage in &self.stages {
            for block in stage {
                h = block.forward(ctx, h)?;
            }
            taps.push(h);
        }
        Ok([taps[0], taps[1], taps[2]])
    }
}

/// Per-scale features of both branches; `x` from the band image, `y` from RGB.
#[derive(Clone, Copy, Debug)]
pub struct ScaleFeatures {
    pub x: [Var; 3],
    pub y: [Var; 3],
}

/// Both branches; `b1` sees the band image and `b2` the RGB image.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub b1: Branch,
    pub b2: Branch,
}

impl Backbone {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, cfg: &BackboneConfig, rng: &mut R) -> Result<Self> {
        Ok(Backbone {
            b1: Branch::new(store, "b1", cfg, rng)?,
            b2: Branch::new(store, "b2", cfg, rng)?,
        })
    }

    pub fn extract<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, band: Var, rgb: Var) -> Result<ScaleFeatures> {
        if ctx.graph.shape(band) != ctx.graph.shape(rgb) {
            return Err(Error::Input(format!(
                "band {:?} and rgb {:?} inputs differ in shape",
                ctx.graph.shape(band),
                ctx.graph.shape(rgb)
            )));
        }
        Ok(ScaleFeatures {
            x: self.b1.forward(ctx, band)?,
            y: self.b2.forward(ctx, rgb)?,
        })
    }
}
