//! Run configuration, serialized into every checkpoint and report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::BackboneConfig;
use crate::error::{io_err, Error, Result};
use crate::fusion::{DownsampleOrder, FusionConfig};
use crate::metrics::{HterMode, DEFAULT_THRESHOLD};
use crate::model::{ModelConfig, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoint: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            checkpoint: "model.ckpt".into(),
            report: "report".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Filter bank threshold.
    pub k: usize,
    pub input_side: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub scales: usize,
    pub xattn_enabled: bool,
    pub branch1_only: bool,
    pub scale_logits: bool,
    pub backbone: BackboneConfig,
    pub downsample: DownsampleOrder,
    pub hidden_nodes: usize,
    /// Decision threshold on the recapture probability.
    pub threshold: f64,
    pub hter_mode: HterMode,
    pub precision: Precision,
    /// Stop once validation AUC reaches this percentage.
    pub target_val_auc: Option<f64>,
    /// Recompute batch-norm statistics over the training split at frozen
    /// weights after every epoch.
    pub recalibrate_bn: bool,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            k: 10,
            input_side: 224,
            batch_size: 16,
            epochs: 20,
            lr: 1e-4,
            scales: 3,
            xattn_enabled: true,
            branch1_only: false,
            scale_logits: false,
            backbone: BackboneConfig::tiny(),
            downsample: DownsampleOrder::PoolThenResize,
            hidden_nodes: 256,
            threshold: DEFAULT_THRESHOLD,
            hter_mode: HterMode::Fixed,
            precision: Precision::F32,
            target_val_auc: None,
            recalibrate_bn: true,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Batch 64 and 20 epochs.
    pub fn paper_scale(mut self) -> Self {
        self.batch_size = 64;
        self.epochs = 20;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2 for batch norm".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.backbone.input_side != self.input_side {
            return Err(Error::Config(format!(
                "input side {} disagrees with backbone input side {}",
                self.input_side, self.backbone.input_side
            )));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            backbone: self.backbone.clone(),
            fusion: FusionConfig {
                n_scales: self.scales,
                hidden_nodes: self.hidden_nodes,
                downsample: self.downsample,
                ..FusionConfig::default()
            },
            xattn_enabled: self.xattn_enabled,
            branch1_only: self.branch1_only,
            scale_logits: self.scale_logits,
        }
    }

    pub fn variant(&self) -> Variant {
        self.model_config().variant()
    }

    pub fn set_variant(&mut self, variant: Variant) {
        let mut m = self.model_config();
        m.set_variant(variant);
        self.scales = m.fusion.n_scales;
        self.xattn_enabled = m.xattn_enabled;
        self.branch1_only = m.branch1_only;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> [u8; 32] {
        hash_json(&self.to_json())
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn hash_json(json: &str) -> [u8; 32] {
    Sha256::digest(json.as_bytes()).into()
}
