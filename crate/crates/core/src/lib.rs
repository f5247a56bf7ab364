//! Block-structured adaptive mesh refinement building blocks.
//!
//! The crate is organized bottom-up:
//!
//! - [`index_space`]: integer boxes, centering and problem geometry.
//! - [`arena`]: pooled and asynchronous-safe memory arenas.
//! - [`mesh`]: fabs, box arrays, distribution mappings, multifabs and tiling.
//! - [`kernels`]: serial / CPU-parallel launch backend with fused loops,
//!   specialized dispatch and single-pass mixed reductions.
//! - [`comm`]: simulated ranks, cached aggregated halo exchange and copies.
//! - [`particles`]: pure struct-of-arrays particle containers.
//! - [`amr`]: two-level hierarchy, regridding, averaging and interpolation.
//! - [`interop`]: array-protocol metadata for zero-copy scripting views.
//! - [`tools`]: inputs files, plotfiles, the heat demo and microbenchmarks.

// `Real` widenings and casts are no-ops in the default f64 build.
#![allow(clippy::useless_conversion, clippy::unnecessary_cast, clippy::needless_range_loop)]

pub mod amr;
pub mod arena;
pub mod comm;
pub mod error;
pub mod index_space;
pub mod interop;
pub mod kernels;
pub mod mesh;
pub mod particles;
pub mod tools;

pub use error::{Error, Result};
pub use index_space::{Geometry, IndexBox, IndexType, IntVect, SPACEDIM};

/// Floating point type of mesh and particle data.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
/// Floating point type of mesh and particle data.
#[cfg(feature = "single-precision")]
pub type Real = f32;
