//! Phase-guided gradient adjustment for vision+proprioception behavior cloning.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! trajectory data model, motion-consistency change-point detection, the
//! recurrent transition indicator, a small deterministic neural-network
//! engine, the two-branch policy with its training modes, and a toy 2-D
//! pick-and-place simulator with a scripted expert. File formats, the CLI
//! and the experiment pipeline live in the `gap` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so NaN fails validation; DP tables index
// several arrays with one loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_is_multiple_of)]

extern crate alloc;

pub mod error;
pub mod gradsuite;
pub mod indicator;
pub mod math;
pub mod metrics;
pub mod nnkit;
pub mod policy;
pub mod rng;
pub mod segment;
pub mod sim;
pub mod traj;

pub use error::{Error, Result};
