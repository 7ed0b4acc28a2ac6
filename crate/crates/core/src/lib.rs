//! Online de-noise filter selection for an image classifier.
//!
//! A learning agent observes quantized quality features of a degraded image,
//! picks one of six filters, and is rewarded by how close the classifier's
//! correct-label probability on the filtered image comes to its probability
//! on the clean original.

pub mod agents;
pub mod dataset;
pub mod detector;
pub mod env;
pub mod filters;
pub mod metrics;
pub mod raster;
pub mod sensing;
pub mod texgen;

pub use agents::{Agent, LinUcbAgent, QTableAgent};
pub use dataset::NamedImage;
pub use filters::{Action, NoiseKind};
pub use raster::Raster;
pub use sensing::AgentState;
