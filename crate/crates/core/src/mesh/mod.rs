//! Mesh storage: fabs and their views, box layouts and multifabs.

mod fab;
mod layout;
mod multifab;

pub use fab::{is_signaling_nan, Fab, FabView, FabViewMut, SIGNALING_NAN};
pub use layout::{box_difference, BoxArray, DistributionMapping};
pub use multifab::{MFIter, MultiFab, DEFAULT_TILE_SIZE};
