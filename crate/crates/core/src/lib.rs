//! Multi-view stereo with PatchMatch, piecewise planar priors and
//! geometric consistency.
//!
//! The crate estimates a depth and normal map per calibrated view and fuses
//! them into a point cloud. [`pipeline::Pipeline`] drives the three
//! PatchMatch phases; the lower-level modules are usable on their own.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod dataset;
pub mod delaunay;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geomcons;
pub mod geometry;
pub mod io_util;
pub mod patchmatch;
pub mod photometric;
pub mod pipeline;
pub mod prior;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, Pipeline, PipelineConfig, PipelineOutput};
