//! File formats, experiment configuration and the `lazyrob` command-line
//! driver built on `lazyrob-core`.
//!
//! * [`files`]: IDX input (plain or gzip), checkpoints, dataset caches and
//!   atomic writes;
//! * [`config`]: the JSON experiment config and its command-line overrides;
//! * [`report`]: CSV tables with a provenance comment line;
//! * [`commands`]: `train`, `advtrain`, `attack`, `verify`, `data-prepare`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
