//! Config-driven pipeline around the `chronoflow` library: stage runner,
//! JSON manifest, CSV tables and SVG figures.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod svg;
pub mod tables;

pub use config::RunConfig;
pub use manifest::{Manifest, Stage, Status};
pub use pipeline::{run_pipeline, StageError};
