//! Message passing over the alternative graph: message, aggregate, update,
//! and readout, with presets for the logit and per-alternative network
//! special cases.

mod config;
mod model;
mod params;

pub use config::{Aggregation, ModelConfig, Preset, Readout, Update};
pub use model::{ChoiceBatch, NestGnn, Recorded};
pub use params::{parameter_count, ModelArtifact, ParameterRecord, ParameterSet, ARTIFACT_FORMAT_VERSION};
