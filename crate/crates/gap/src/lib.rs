//! Files, caching, the experiment pipeline and the command-line interface
//! around the `gap-core` algorithms.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod formats;
pub mod fsutil;
pub mod pipeline;
pub mod report;
pub mod stages;

pub use error::{GapError, Result};
pub use gap_core as core;
