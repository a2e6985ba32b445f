//! Recaptured document image detection with a frequency-band branch and an
//! RGB branch joined by multi-scale cross-attention.

pub mod attention;
pub mod backbone;
pub mod config;
pub mod error;
pub mod filterbank;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Detector, ModelConfig, Variant};
