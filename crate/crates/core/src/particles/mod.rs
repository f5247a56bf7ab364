//! Pure struct-of-arrays particles binned by (level, grid, tile), with packed
//! 64-bit ids, redistribution across grids and ranks, fused per-particle
//! launches and mixed reductions. [`AosRefTile`] is a record-layout reference
//! kept for layout comparisons.

mod aos;
mod container;
mod id;
mod tile;

pub use aos::{sweep_aos, sweep_soa, AosRecord, AosRefTile, Drift};
pub use container::{
    ComponentRegistry, Location, OnLost, ParTile, ParTileMut, ParticleContainer, ParticleLevel, TileKey,
    POSITION_NAMES,
};
pub use id::{invalidate_word, is_valid_word, ParticleId, LOCAL_BITS, MAX_LOCAL, MAX_RANK, RANK_BITS};
pub use tile::{ParticleMut, ParticleRef, ParticleTile};
