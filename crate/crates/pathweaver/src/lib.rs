//! Pedestrian network hypothesis, raster-guided refinement, evaluation
//! metrics, and mapping task coordination.

pub mod cli;
pub mod fixture;
pub mod geo;
pub mod metrics;
pub mod pedestrianfer;
pub mod pedgraph;
pub mod pipeline;
pub mod report;
pub mod raster;
pub mod refine;
pub mod street;
pub mod tasking;

pub use cli::cli_main;
