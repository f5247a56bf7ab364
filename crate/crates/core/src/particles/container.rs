use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use super::id::{is_valid_word, ParticleId, MAX_LOCAL};
use super::tile::{ParticleMut, ParticleRef, ParticleTile, TilePtrs};
use crate::arena::ArenaHandle;
use crate::comm::Comm;
use crate::error::{Error, Result};
use crate::index_space::{Geometry, IndexBox, IntVect};
use crate::kernels::{Backend, ReduceOp};
use crate::mesh::{BoxArray, DistributionMapping, DEFAULT_TILE_SIZE};
use crate::{Real, SPACEDIM};

/// Position column names, in axis order.
pub const POSITION_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileKey {
    pub level: usize,
    pub grid: usize,
    pub tile: usize,
}

/// What redistribute does with particles outside a non-periodic domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OnLost {
    #[default]
    Remove,
    Error,
}

impl FromStr for OnLost {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove" => Ok(OnLost::Remove),
            "error" => Ok(OnLost::Error),
            _ => Err(Error::InputsValue { key: "particles.on_lost".into(), message: format!("expected remove|error, got `{s}`") }),
        }
    }
}

/// Names of the runtime real and int components, in column order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ComponentRegistry {
    reals: Vec<String>,
    ints: Vec<String>,
}

impl ComponentRegistry {
    pub fn new(reals: &[&str], ints: &[&str]) -> Result<ComponentRegistry> {
        let mut r = ComponentRegistry::default();
        for n in reals {
            r.push_real(n)?;
        }
        for n in ints {
            r.push_int(n)?;
        }
        Ok(r)
    }

    fn check_free(&self, name: &str) -> Result<()> {
        let taken = POSITION_NAMES.contains(&name)
            || name == "id"
            || self.reals.iter().chain(&self.ints).any(|n| n == name);
        if taken {
            return Err(Error::DuplicateComponent(name.into()));
        }
        Ok(())
    }

    fn push_real(&mut self, name: &str) -> Result<usize> {
        self.check_free(name)?;
        self.reals.push(name.into());
        Ok(self.reals.len() - 1)
    }

    fn push_int(&mut self, name: &str) -> Result<usize> {
        self.check_free(name)?;
        self.ints.push(name.into());
        Ok(self.ints.len() - 1)
    }

    pub fn real_index(&self, name: &str) -> Result<usize> {
        self.reals.iter().position(|n| n == name).ok_or_else(|| Error::UnknownComponent(name.into()))
    }

    pub fn int_index(&self, name: &str) -> Result<usize> {
        self.ints.iter().position(|n| n == name).ok_or_else(|| Error::UnknownComponent(name.into()))
    }

    pub fn real_names(&self) -> &[String] {
        &self.reals
    }

    pub fn int_names(&self) -> &[String] {
        &self.ints
    }
}

/// Grids of one level that particles are binned against.
#[derive(Clone, Debug)]
pub struct ParticleLevel {
    pub geom: Geometry,
    pub ba: Arc<BoxArray>,
    pub dm: Arc<DistributionMapping>,
}

impl ParticleLevel {
    pub fn new(geom: Geometry, ba: Arc<BoxArray>, dm: Arc<DistributionMapping>) -> Result<ParticleLevel> {
        if ba.len() != dm.len() {
            return Err(Error::LayoutMismatch(ba.len(), dm.len()));
        }
        Ok(ParticleLevel { geom, ba, dm })
    }
}

/// Where a position belongs: wrapped position, tile and owning rank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub pos: [Real; SPACEDIM],
    pub key: TileKey,
    pub owner: usize,
}

fn tile_index(bx: &IndexBox, cell: IntVect, ts: IntVect) -> usize {
    let len = bx.length();
    let mut idx = 0usize;
    for d in (0..SPACEDIM).rev() {
        let n = ((len[d] + ts[d] - 1) / ts[d]) as usize;
        let t = ((cell[d] - bx.lo()[d]) / ts[d]) as usize;
        idx = idx * n + t;
    }
    idx
}

fn locate(levels: &[ParticleLevel], ts: IntVect, x: [Real; SPACEDIM]) -> Option<Location> {
    let pos = levels[0].geom.wrap_position(x)?;
    for (level, l) in levels.iter().enumerate().rev() {
        let cell = l.geom.cell_of_wrapped(pos);
        if let Some(grid) = l.ba.find(cell) {
            let tile = tile_index(&l.ba.get(grid), cell, ts);
            return Some(Location { pos, key: TileKey { level, grid, tile }, owner: l.dm.rank_of(grid) });
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
enum Dest {
    Keep,
    Drop,
    Lost,
    Move(TileKey, usize),
}

/// Named column access to one tile.
pub struct ParTile<'a> {
    pub key: TileKey,
    pub tile: &'a ParticleTile,
    registry: &'a ComponentRegistry,
}

impl<'a> ParTile<'a> {
    pub fn len(&self) -> usize {
        self.tile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tile.is_empty()
    }

    /// Real column by name; `x`, `y`, `z` are the positions.
    pub fn real(&self, name: &str) -> Result<&'a [Real]> {
        if let Some(d) = POSITION_NAMES.iter().position(|&n| n == name) {
            return Ok(self.tile.pos(d));
        }
        Ok(self.tile.real(self.registry.real_index(name)?))
    }

    pub fn int(&self, name: &str) -> Result<&'a [i32]> {
        Ok(self.tile.int(self.registry.int_index(name)?))
    }

    pub fn ids(&self) -> &'a [u64] {
        self.tile.ids()
    }

    pub fn registry(&self) -> &'a ComponentRegistry {
        self.registry
    }
}

/// Named, writable column access to one tile.
pub struct ParTileMut<'a> {
    pub key: TileKey,
    pub tile: &'a mut ParticleTile,
    registry: &'a ComponentRegistry,
}

impl ParTileMut<'_> {
    pub fn len(&self) -> usize {
        self.tile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tile.is_empty()
    }

    pub fn registry(&self) -> &ComponentRegistry {
        self.registry
    }

    pub fn real_mut(&mut self, name: &str) -> Result<&mut [Real]> {
        if let Some(d) = POSITION_NAMES.iter().position(|&n| n == name) {
            return Ok(self.tile.pos_mut(d));
        }
        let k = self.registry.real_index(name)?;
        Ok(self.tile.real_mut(k))
    }

    pub fn int_mut(&mut self, name: &str) -> Result<&mut [i32]> {
        let k = self.registry.int_index(name)?;
        Ok(self.tile.int_mut(k))
    }

    pub fn ids_mut(&mut self) -> &mut [u64] {
        self.tile.ids_mut()
    }
}

/// SoA particles of one rank, binned by (level, grid, tile).
///
/// Particles added for a grid owned by another rank wait in a staging tile
/// until the next [`redistribute`](ParticleContainer::redistribute); they are
/// counted, reduced over and visited by [`apply`](ParticleContainer::apply),
/// but not returned by tile iteration.
pub struct ParticleContainer {
    levels: Vec<ParticleLevel>,
    rank: usize,
    registry: ComponentRegistry,
    tiles: BTreeMap<TileKey, ParticleTile>,
    staging: ParticleTile,
    tile_size: IntVect,
    on_lost: OnLost,
    next_local: u64,
    arena: ArenaHandle,
}

impl ParticleContainer {
    pub fn new(
        levels: Vec<ParticleLevel>,
        rank: usize,
        registry: ComponentRegistry,
        arena: &ArenaHandle,
    ) -> Result<ParticleContainer> {
        let first = levels.first().ok_or(Error::NoSuchLevel(0))?;
        if rank >= first.dm.nranks() {
            return Err(Error::RankOutOfRange { rank, nranks: first.dm.nranks() });
        }
        let staging = ParticleTile::new(registry.reals.len(), registry.ints.len(), arena);
        Ok(ParticleContainer {
            levels,
            rank,
            registry,
            tiles: BTreeMap::new(),
            staging,
            tile_size: DEFAULT_TILE_SIZE,
            on_lost: OnLost::Remove,
            next_local: 0,
            arena: arena.clone(),
        })
    }

    /// Sets the binning tile size. Takes effect at the next redistribute.
    pub fn with_tile_size(mut self, ts: IntVect) -> Result<Self> {
        if !ts.all_ge(IntVect::unit()) {
            return Err(Error::InvalidTileSize(ts));
        }
        self.tile_size = ts;
        Ok(self)
    }

    pub fn with_on_lost(mut self, on_lost: OnLost) -> Self {
        self.on_lost = on_lost;
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn registry(&self) -> &ComponentRegistry {
        &self.registry
    }

    pub fn levels(&self) -> &[ParticleLevel] {
        &self.levels
    }

    pub fn finest_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn tile_size(&self) -> IntVect {
        self.tile_size
    }

    /// Replaces the grids (e.g. after a regrid). Particles are re-binned at
    /// the next redistribute.
    pub fn set_levels(&mut self, levels: Vec<ParticleLevel>) -> Result<()> {
        if levels.is_empty() {
            return Err(Error::NoSuchLevel(0));
        }
        for t in std::mem::take(&mut self.tiles).into_values() {
            self.staging.extend_from(&t);
        }
        self.levels = levels;
        Ok(())
    }

    /// Adds a real component, zero for existing particles. Must be called on
    /// every rank.
    pub fn add_real_component(&mut self, name: &str) -> Result<usize> {
        let k = self.registry.push_real(name)?;
        self.tiles.values_mut().chain(std::iter::once(&mut self.staging)).for_each(|t| t.add_real_column());
        Ok(k)
    }

    pub fn add_int_component(&mut self, name: &str) -> Result<usize> {
        let k = self.registry.push_int(name)?;
        self.tiles.values_mut().chain(std::iter::once(&mut self.staging)).for_each(|t| t.add_int_column());
        Ok(k)
    }

    /// Tile, grid and owner of a position, or `None` if it lies outside the
    /// domain along a non-periodic axis.
    pub fn locate(&self, x: [Real; SPACEDIM]) -> Option<Location> {
        locate(&self.levels, self.tile_size, x)
    }

    pub fn tile_box(&self, key: TileKey) -> IndexBox {
        let bx = self.levels[key.level].ba.get(key.grid);
        bx.tiles(self.tile_size)[key.tile]
    }

    /// Adds particles with fresh ids of this rank. Components not listed are
    /// zero. Nothing is added if any input is rejected.
    pub fn add_particles(
        &mut self,
        positions: &[[Real; SPACEDIM]],
        reals: &[(&str, &[Real])],
        ints: &[(&str, &[i32])],
    ) -> Result<Vec<ParticleId>> {
        let n = positions.len();
        let mut real_cols: Vec<Option<&[Real]>> = vec![None; self.registry.reals.len()];
        for &(name, col) in reals {
            if col.len() != n {
                return Err(Error::ComponentLength { name: name.into(), expected: n, got: col.len() });
            }
            real_cols[self.registry.real_index(name)?] = Some(col);
        }
        let mut int_cols: Vec<Option<&[i32]>> = vec![None; self.registry.ints.len()];
        for &(name, col) in ints {
            if col.len() != n {
                return Err(Error::ComponentLength { name: name.into(), expected: n, got: col.len() });
            }
            int_cols[self.registry.int_index(name)?] = Some(col);
        }
        if self.next_local + n as u64 > MAX_LOCAL + 1 {
            return Err(Error::IdOverflow { rank: self.rank as u64, local: self.next_local + n as u64 - 1 });
        }
        let locs = positions
            .iter()
            .map(|&x| self.locate(x).ok_or(Error::ParticleOutside(x.map(|v| v as f64))))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::with_capacity(n);
        let mut rv = vec![0.0; real_cols.len()];
        let mut iv = vec![0; int_cols.len()];
        for (i, loc) in locs.into_iter().enumerate() {
            let id = ParticleId::encode(self.rank as u64, self.next_local, true)?;
            self.next_local += 1;
            for (v, c) in rv.iter_mut().zip(&real_cols) {
                *v = c.map_or(0.0, |c| c[i]);
            }
            for (v, c) in iv.iter_mut().zip(&int_cols) {
                *v = c.map_or(0, |c| c[i]);
            }
            let tile = if loc.owner == self.rank {
                let (nr, ni, arena) = (rv.len(), iv.len(), &self.arena);
                self.tiles.entry(loc.key).or_insert_with(|| ParticleTile::new(nr, ni, arena))
            } else {
                &mut self.staging
            };
            tile.push(loc.pos, id.raw(), &rv, &iv);
            ids.push(id);
        }
        Ok(ids)
    }

    /// Particles held by this rank, valid or not, staging included.
    pub fn num_local(&self) -> usize {
        self.tiles.values().map(|t| t.len()).sum::<usize>() + self.staging.len()
    }

    pub fn num_local_valid(&self) -> usize {
        self.tiles
            .values()
            .chain(std::iter::once(&self.staging))
            .map(|t| t.ids().iter().filter(|&&w| is_valid_word(w)).count())
            .sum()
    }

    /// Valid particles across all ranks. Collective.
    pub fn num_global_valid(&self, comm: &Comm) -> Result<usize> {
        let [n] = comm.allreduce([ReduceOp::Sum], [self.num_local_valid() as Real])?;
        Ok(n as usize)
    }

    /// Non-empty tiles of `level` owned by this rank, in key order.
    pub fn tiles(&self, level: usize) -> impl Iterator<Item = ParTile<'_>> {
        let registry = &self.registry;
        self.tiles
            .iter()
            .filter(move |(k, t)| k.level == level && !t.is_empty())
            .map(move |(&key, tile)| ParTile { key, tile, registry })
    }

    pub fn tiles_mut(&mut self, level: usize) -> impl Iterator<Item = ParTileMut<'_>> {
        let registry = &self.registry;
        self.tiles
            .iter_mut()
            .filter(move |(k, t)| k.level == level && !t.is_empty())
            .map(move |(&key, tile)| ParTileMut { key, tile, registry })
    }

    pub fn tile(&self, key: TileKey) -> Option<&ParticleTile> {
        self.tiles.get(&key)
    }

    pub fn staging(&self) -> &ParticleTile {
        &self.staging
    }

    fn all_tiles_mut(&mut self) -> impl Iterator<Item = &mut ParticleTile> {
        self.tiles.values_mut().chain(std::iter::once(&mut self.staging))
    }

    fn all_tiles(&self) -> impl Iterator<Item = &ParticleTile> {
        self.tiles.values().chain(std::iter::once(&self.staging))
    }

    /// Calls `f` on every local particle, valid or not, in one launch. The
    /// proxy exposes `is_valid`; bodies that should only touch valid
    /// particles test it.
    pub fn apply(&mut self, backend: &Backend, f: impl Fn(&mut ParticleMut<'_>) + Sync) {
        let ptrs: Vec<TilePtrs> = self.all_tiles_mut().map(|t| t.ptrs()).collect();
        let lens: Vec<usize> = ptrs.iter().map(|p| p.len).collect();
        backend.parallel_for_segments(&lens, |s, range| {
            for i in range {
                f(&mut ptrs[s].particle(i));
            }
        });
    }

    /// Single-pass mixed reduction over the valid local particles.
    pub fn reduce<const N: usize>(
        &self,
        backend: &Backend,
        ops: [ReduceOp; N],
        f: impl Fn(ParticleRef<'_>) -> [Real; N] + Sync,
    ) -> [Real; N] {
        let tiles: Vec<&ParticleTile> = self.all_tiles().collect();
        let lens: Vec<usize> = tiles.iter().map(|t| t.len()).collect();
        let idents = ReduceOp::identities(ops);
        backend.reduce_segments(&lens, ops, |s, i| {
            let p = tiles[s].get(i);
            if p.is_valid() {
                f(p)
            } else {
                idents
            }
        })
    }

    /// [`reduce`](ParticleContainer::reduce) combined across ranks. Collective.
    pub fn reduce_global<const N: usize>(
        &self,
        comm: &Comm,
        ops: [ReduceOp; N],
        f: impl Fn(ParticleRef<'_>) -> [Real; N] + Sync,
    ) -> Result<[Real; N]> {
        let local = self.reduce(comm.backend(), ops, f);
        comm.allreduce(ops, local)
    }

    /// Removes invalid particles and moves every other particle to the tile,
    /// grid and rank owning its (periodically wrapped) position. Collective;
    /// at most one message per ordered rank pair.
    ///
    /// Particles outside a non-periodic domain are removed, or, with
    /// [`OnLost::Error`], the call fails on every rank before anything moves.
    pub fn redistribute(&mut self, comm: &Comm) -> Result<()> {
        let me = self.rank;
        let nranks = comm.nranks();
        let levels = &self.levels;
        let ts = self.tile_size;
        let template = self.staging.empty_like();
        let mut items: Vec<(Option<TileKey>, &mut ParticleTile, Vec<Dest>)> = self
            .tiles
            .iter_mut()
            .map(|(k, t)| (Some(*k), t, Vec::new()))
            .chain(std::iter::once((None, &mut self.staging, Vec::new())))
            .collect();
        comm.backend().for_each_mut(&mut items, |_, (key, tile, dest)| {
            dest.reserve(tile.len());
            let ids = tile.ids().to_vec();
            for (i, &w) in ids.iter().enumerate() {
                if !is_valid_word(w) {
                    dest.push(Dest::Drop);
                    continue;
                }
                let Some(loc) = locate(levels, ts, tile.position(i)) else {
                    dest.push(Dest::Lost);
                    continue;
                };
                for d in 0..SPACEDIM {
                    tile.pos_mut(d)[i] = loc.pos[d];
                }
                dest.push(if Some(loc.key) == *key && loc.owner == me { Dest::Keep } else { Dest::Move(loc.key, loc.owner) });
            }
        });

        if self.on_lost == OnLost::Error {
            let first = items.iter().find_map(|(_, t, dest)| {
                dest.iter().position(|d| *d == Dest::Lost).map(|i| t.position(i).map(|v| v as f64))
            });
            if let Some(x) = comm.allgather(first).into_iter().flatten().next() {
                return Err(Error::ParticleOutside(x));
            }
        }

        let mut outgoing: Vec<ParticleTile> = (0..nranks).map(|_| template.empty_like()).collect();
        let mut moved = template.empty_like();
        let mut moved_keys = Vec::new();
        for (_, tile, dest) in items.iter_mut() {
            let mut keep = Vec::with_capacity(dest.len());
            for (i, d) in dest.iter().enumerate() {
                match *d {
                    Dest::Move(key, owner) if owner == me => {
                        moved.push_from(tile, i);
                        moved_keys.push(key);
                    }
                    Dest::Move(_, owner) => outgoing[owner].push_from(tile, i),
                    _ => {}
                }
                keep.push(*d == Dest::Keep);
            }
            if keep.iter().any(|k| !k) {
                tile.retain_mask(&keep);
            }
        }
        drop(items);

        let counts: Vec<u64> = outgoing.iter().map(|t| t.len() as u64).collect();
        let incoming = comm.alltoall_counts(&counts);
        for (p, buf) in outgoing.into_iter().enumerate() {
            if p != me && !buf.is_empty() {
                let bytes = buf.len() * buf.bytes_per_particle();
                comm.send_any(p, bytes, Box::new(buf));
            }
        }
        for (i, key) in moved_keys.into_iter().enumerate() {
            self.insert_from(key, &moved, i);
        }
        for (p, &n) in incoming.iter().enumerate() {
            if p == me || n == 0 {
                continue;
            }
            let buf = *comm.recv_any(p).downcast::<ParticleTile>().expect("particle buffer");
            for i in 0..buf.len() {
                let loc = locate(&self.levels, self.tile_size, buf.position(i)).expect("sender located it");
                debug_assert_eq!(loc.owner, me);
                self.insert_from(loc.key, &buf, i);
            }
        }
        self.tiles.retain(|_, t| !t.is_empty());
        Ok(())
    }

    fn insert_from(&mut self, key: TileKey, src: &ParticleTile, i: usize) {
        let template = &self.staging;
        self.tiles.entry(key).or_insert_with(|| template.empty_like()).push_from(src, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::RankRuntime;

    fn unit_square_two_grids(nranks: usize) -> ParticleLevel {
        let geom = Geometry::unit_cube(IntVect::new(8, 8, 1), [false, false, false]).unwrap();
        let ba = BoxArray::new(vec![
            IndexBox::new(IntVect::new(0, 0, 0), IntVect::new(3, 7, 0)),
            IndexBox::new(IntVect::new(4, 0, 0), IntVect::new(7, 7, 0)),
        ])
        .unwrap();
        let dm = DistributionMapping::round_robin(2, nranks).unwrap();
        ParticleLevel::new(geom, Arc::new(ba), Arc::new(dm)).unwrap()
    }

    #[test]
    fn tile_index_matches_tiling() {
        let bx = IndexBox::new(IntVect::new(-3, 2, 0), IntVect::new(9, 12, 4));
        let ts = IntVect::new(4, 3, 2);
        for (t, tb) in bx.tiles(ts).iter().enumerate() {
            for c in tb.cells() {
                assert_eq!(tile_index(&bx, c, ts), t);
            }
        }
    }

    #[test]
    fn particle_moves_to_grid_one() {
        for nranks in [1, 2] {
            let rt = RankRuntime::new(nranks);
            rt.run(|comm| {
                let reg = ComponentRegistry::new(&["w"], &[]).unwrap();
                let mut pc =
                    ParticleContainer::new(vec![unit_square_two_grids(nranks)], comm.rank(), reg, &ArenaHandle::system())
                        .unwrap();
                if comm.rank() == 0 {
                    pc.add_particles(&[[0.25, 0.2, 0.5]], &[("w", &[3.0])], &[]).unwrap();
                    assert_eq!(pc.tiles(0).next().unwrap().key.grid, 0);
                }
                pc.apply(comm.backend(), |p| p.set_pos(0, p.pos(0) + 0.5));
                pc.redistribute(comm).unwrap();
                let owner_of_grid1 = 1 % nranks;
                if comm.rank() == owner_of_grid1 {
                    let t: Vec<_> = pc.tiles(0).collect();
                    assert_eq!(t.len(), 1);
                    assert_eq!(t[0].key.grid, 1);
                    assert_eq!(t[0].real("x").unwrap(), &[0.75]);
                    assert_eq!(t[0].real("w").unwrap(), &[3.0]);
                } else {
                    assert_eq!(pc.num_local(), 0);
                }
                assert_eq!(pc.num_global_valid(comm).unwrap(), 1);
            })
            .unwrap();
        }
    }

    #[test]
    fn invalidated_and_lost_particles() {
        let comm = Comm::solo(Backend::serial());
        let mut pc = ParticleContainer::new(
            vec![unit_square_two_grids(1)],
            0,
            ComponentRegistry::default(),
            &ArenaHandle::system(),
        )
        .unwrap();
        let pos: Vec<[Real; 3]> = (0..10).map(|i| [0.05 + 0.09 * i as Real, 0.5, 0.5]).collect();
        let ids = pc.add_particles(&pos, &[], &[]).unwrap();
        let uniq: std::collections::BTreeSet<_> = ids.iter().collect();
        assert_eq!(uniq.len(), 10);
        pc.apply(comm.backend(), |p| {
            if p.id().local() % 3 == 0 && p.id().local() > 0 {
                p.invalidate();
            }
        });
        pc.redistribute(&comm).unwrap();
        assert_eq!(pc.num_local(), 7);
        assert_eq!(pc.num_local_valid(), 7);

        assert!(matches!(pc.add_particles(&[[1.5, 0.5, 0.5]], &[], &[]), Err(Error::ParticleOutside(_))));
        assert!(matches!(pc.add_particles(&[[0.5, 0.5, 0.5]], &[("nope", &[1.0])], &[]), Err(Error::UnknownComponent(_))));
        pc.apply(comm.backend(), |p| {
            if p.id().local() == 1 {
                p.set_pos(1, -0.25);
            }
        });
        let mut strict = pc.with_on_lost(OnLost::Error);
        assert!(matches!(strict.redistribute(&comm), Err(Error::ParticleOutside(_))));
        assert_eq!(strict.num_local(), 7);
        let mut pc = strict.with_on_lost(OnLost::Remove);
        pc.redistribute(&comm).unwrap();
        assert_eq!(pc.num_local(), 6);
    }

    #[test]
    fn no_motion_sends_nothing() {
        let rt = RankRuntime::new(2);
        rt.run(|comm| {
            let mut pc = ParticleContainer::new(
                vec![unit_square_two_grids(2)],
                comm.rank(),
                ComponentRegistry::default(),
                &ArenaHandle::system(),
            )
            .unwrap();
            let x = if comm.rank() == 0 { 0.1 } else { 0.9 };
            pc.add_particles(&[[x, 0.5, 0.5]], &[], &[]).unwrap();
            pc.redistribute(comm).unwrap();
            assert_eq!(pc.num_local(), 1);
        })
        .unwrap();
        assert_eq!(rt.message_stats().total_messages(), 0);
    }

    #[test]
    fn mixed_reduce_skips_invalid() {
        let comm = Comm::solo(Backend::cpu_parallel(3));
        let reg = ComponentRegistry::new(&["w"], &[]).unwrap();
        let mut pc = ParticleContainer::new(vec![unit_square_two_grids(1)], 0, reg, &ArenaHandle::system()).unwrap();
        let ops = [ReduceOp::Sum, ReduceOp::Min, ReduceOp::Max];
        assert_eq!(pc.reduce(comm.backend(), ops, |p| [p.real(0), p.pos(0), p.pos(0)]), [0.0, Real::INFINITY, Real::NEG_INFINITY]);
        let pos: Vec<[Real; 3]> = (0..20).map(|i| [0.025 + 0.05 * i as Real, 0.5, 0.5]).collect();
        let w: Vec<Real> = (0..20).map(|i| i as Real).collect();
        pc.add_particles(&pos, &[("w", &w)], &[]).unwrap();
        pc.apply(comm.backend(), |p| {
            if p.index() == 0 {
                p.invalidate();
            }
        });
        let got = pc.reduce(comm.backend(), ops, |p| [p.real(0), p.pos(0), p.pos(0)]);
        let mut oracle = (0.0, Real::INFINITY, Real::NEG_INFINITY);
        for t in pc.all_tiles() {
            for i in 0..t.len() {
                if t.get(i).is_valid() {
                    oracle.0 += t.real(0)[i];
                    oracle.1 = oracle.1.min(t.pos(0)[i]);
                    oracle.2 = oracle.2.max(t.pos(0)[i]);
                }
            }
        }
        assert_eq!(got, [oracle.0, oracle.1, oracle.2]);
    }
}
