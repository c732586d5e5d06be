//! File formats, configuration, and batch pipelines for the `qsaw-core`
//! numerics library.
//!
//! This crate hosts everything that needs an operating system: JSON
//! configuration parsing, CSV spectrum persistence, fit-result reports,
//! multi-dataset pipelines, and run manifests. The `qsaw` binary in this
//! package exposes the whole toolkit on the command line.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod results;
pub mod spectrum_io;
