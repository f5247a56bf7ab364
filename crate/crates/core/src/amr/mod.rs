//! Two-level (or deeper) mesh hierarchy: grid generation from tagged cells,
//! fine-to-coarse averaging, coarse-to-fine interpolation and ghost filling
//! across levels.

mod mesh;
mod ops;

pub use mesh::{AmrConfig, AmrMesh, TagField, TAG_CLEAR, TAG_SET};
pub use ops::{
    average_down, coarse_footprint, fill_coarse_patch, fill_patch, interp_cell, interp_fab, interp_limits,
    InterpScheme,
};
