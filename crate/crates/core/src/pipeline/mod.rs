//! Dataset formats, synthetic data, configuration, and the end-to-end
//! pipeline steps that the CLI subcommands wrap.

pub mod artifacts;
pub mod config;
pub mod dataset;
pub mod report;
pub mod steps;
pub mod synth;

pub use config::PipelineConfig;
pub use dataset::FeatureDataset;
pub use report::{AblateReport, EvalReport};
pub use steps::{EvalOptions, PipelinePaths, QuerySpec, RelevanceMode};
pub use synth::{synth_generate, SynthConfig, SynthOutput};
