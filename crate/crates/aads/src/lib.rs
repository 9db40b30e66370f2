//! Scan-to-simulation toolkit for street scenes.
//!
//! Starting from registered camera images, sparse depth and LiDAR scans,
//! the crate covers the pipeline described in the module docs:
//!
//! - [`depth`] — refine projected point-cloud depth into dense maps
//!   (median pruning, guided filtering, Poisson completion).
//! - [`view`] — warp reference captures into a novel target view.
//! - [`stitch`] — Markov-random-field seam selection over warped
//!   candidates ([`trws`] solves the MRF) plus Poisson gradient blending.
//! - [`lidar`] — fit a parametric spinning-LiDAR model to real scans and
//!   simulate new scans against scene geometry.
//! - [`traffic`] — lane-constrained traffic synthesis driven by velocity
//!   samples harvested from recorded trajectories.
//! - [`augment`] — moving-object removal and composition of simulated
//!   frames with annotations.
//! - [`scene`] — synthetic scenes with an exact ray-tracing oracle, used
//!   by the examples and the test suite.
//!
//! File formats (depth rasters, cameras, PLY clouds/scans, trajectories)
//! live in [`formats`] and [`ply`]; [`pipeline`] chains everything behind
//! a scene manifest.

// Validation code writes `!(x > 0.0)` on purpose so NaN fails the check;
// rewriting to `x <= 0.0` would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The numeric kernels (message passing, filtering, solvers) index several
// rasters by the same coordinate; iterator rewrites obscure the stencils.
#![allow(clippy::needless_range_loop)]

pub mod augment;
pub mod camera;
pub mod cli;
pub mod depth;
pub mod error;
pub mod formats;
pub mod lidar;
pub mod manifest;
pub mod pipeline;
pub mod ply;
pub mod raster;
pub mod scene;
pub mod rasterize;
pub mod stitch;
pub mod traffic;
pub mod trws;
pub mod view;

pub use error::{Error, Result};
