//! Experiment orchestration: config parsing, staged pipeline with content
//! hashes and caching, and summary tables over evaluation reports.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod summary;
