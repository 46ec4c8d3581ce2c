//! Library surface of the `skg` command-line tool: configuration loading and
//! the pipeline stage functions, kept callable for integration tests.

pub mod config;
pub mod stages;

pub use config::PipelineConfig;
pub use stages::{run_pipeline, PipelineSummary};
