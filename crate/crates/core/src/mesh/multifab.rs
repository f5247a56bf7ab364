use std::ops::Range;
use std::sync::Arc;

use super::fab::{Fab, FabView, FabViewMut};
use super::layout::{BoxArray, DistributionMapping};
use crate::arena::ArenaHandle;
use crate::comm::PlanCache;
use crate::error::{Error, Result};
use crate::index_space::{IndexBox, IntVect};
use crate::Real;

/// Default tile size; x is never split.
pub const DEFAULT_TILE_SIZE: IntVect = IntVect::new(1_024_000, 8, 8);

/// Distributed collection of fabs, one per box of a [`BoxArray`] owned by this
/// rank, each allocated over its valid box grown by `ngrow`.
pub struct MultiFab {
    ba: Arc<BoxArray>,
    dm: Arc<DistributionMapping>,
    ncomp: usize,
    ngrow: IntVect,
    rank: usize,
    fabs: Vec<Fab>,
    indices: Vec<usize>,
    local_of: Vec<Option<usize>>,
    arena: ArenaHandle,
    plans: PlanCache,
}

impl MultiFab {
    pub fn define(
        ba: &Arc<BoxArray>,
        dm: &Arc<DistributionMapping>,
        ncomp: usize,
        ngrow: IntVect,
        rank: usize,
        arena: &ArenaHandle,
    ) -> Result<MultiFab> {
        if ba.is_empty() {
            return Err(Error::EmptyBoxArray);
        }
        if ba.len() != dm.len() {
            return Err(Error::LayoutMismatch(ba.len(), dm.len()));
        }
        if rank >= dm.nranks() {
            return Err(Error::RankOutOfRange { rank, nranks: dm.nranks() });
        }
        if ncomp == 0 {
            return Err(Error::ZeroComponents);
        }
        let mut fabs = Vec::new();
        let mut indices = Vec::new();
        let mut local_of = vec![None; ba.len()];
        for i in 0..ba.len() {
            if dm.rank_of(i) == rank {
                local_of[i] = Some(fabs.len());
                indices.push(i);
                fabs.push(Fab::new(ba.get(i).grow_vect(ngrow), ncomp, arena)?);
            }
        }
        Ok(MultiFab {
            ba: ba.clone(),
            dm: dm.clone(),
            ncomp,
            ngrow,
            rank,
            fabs,
            indices,
            local_of,
            arena: arena.clone(),
            plans: PlanCache::default(),
        })
    }

    /// Same layout, rank and arena as `self`, sharing its plan cache.
    pub fn define_like(&self, ncomp: usize, ngrow: IntVect) -> Result<MultiFab> {
        let mut mf = MultiFab::define(&self.ba, &self.dm, ncomp, ngrow, self.rank, &self.arena)?;
        mf.plans = self.plans.clone();
        Ok(mf)
    }

    pub fn boxarray(&self) -> &Arc<BoxArray> {
        &self.ba
    }

    pub fn dm(&self) -> &Arc<DistributionMapping> {
        &self.dm
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn ngrow(&self) -> IntVect {
        self.ngrow
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn arena(&self) -> &ArenaHandle {
        &self.arena
    }

    pub fn plans(&self) -> &PlanCache {
        &self.plans
    }

    /// Number of boxes in the whole layout.
    pub fn len(&self) -> usize {
        self.ba.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ba.is_empty()
    }

    pub fn nlocal(&self) -> usize {
        self.fabs.len()
    }

    /// Global indices of the local fabs, ascending.
    pub fn local_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_local(&self, i: usize) -> bool {
        self.local_of.get(i).is_some_and(|l| l.is_some())
    }

    pub fn local_index(&self, i: usize) -> Result<usize> {
        self.local_of.get(i).copied().flatten().ok_or(Error::NotLocal(i))
    }

    pub fn valid_box(&self, i: usize) -> IndexBox {
        self.ba.get(i)
    }

    pub fn fab_box(&self, i: usize) -> IndexBox {
        self.ba.get(i).grow_vect(self.ngrow)
    }

    pub fn fab(&self, i: usize) -> Result<&Fab> {
        Ok(&self.fabs[self.local_index(i)?])
    }

    pub fn fab_mut(&mut self, i: usize) -> Result<&mut Fab> {
        let l = self.local_index(i)?;
        Ok(&mut self.fabs[l])
    }

    /// Writable view of fab `i` over its grown box.
    pub fn array(&mut self, i: usize) -> Result<FabViewMut<'_>> {
        Ok(self.fab_mut(i)?.view_mut())
    }

    pub fn const_array(&self, i: usize) -> Result<FabView<'_>> {
        Ok(self.fab(i)?.view())
    }

    /// Local fabs with their global indices.
    pub fn local_fabs(&self) -> impl Iterator<Item = (usize, &Fab)> {
        self.indices.iter().copied().zip(self.fabs.iter())
    }

    pub fn local_fabs_mut(&mut self) -> impl Iterator<Item = (usize, &mut Fab)> {
        self.indices.iter().copied().zip(self.fabs.iter_mut())
    }

    pub fn fabs(&self) -> &[Fab] {
        &self.fabs
    }

    pub fn fabs_mut(&mut self) -> &mut [Fab] {
        &mut self.fabs
    }

    /// Sets every element of every local fab, ghosts included.
    pub fn setval(&mut self, value: Real) {
        for f in &mut self.fabs {
            f.setval_all(value);
        }
    }

    /// Sets `comps` over each valid box grown by `ngrow`.
    pub fn setval_region(&mut self, value: Real, comps: Range<usize>, ngrow: IntVect) -> Result<()> {
        for (l, &i) in self.indices.iter().enumerate() {
            let region = self.ba.get(i).grow_vect(ngrow);
            self.fabs[l].setval(value, &region, comps.clone())?;
        }
        Ok(())
    }

    /// Copies `ncomp` components between multifabs with the same layout,
    /// over valid boxes grown by `ngrow`. No communication.
    pub fn copy_local(
        &mut self,
        src: &MultiFab,
        scomp: usize,
        dcomp: usize,
        ncomp: usize,
        ngrow: IntVect,
    ) -> Result<()> {
        if *self.ba != *src.ba || *self.dm != *src.dm {
            return Err(Error::LayoutMismatch(self.ba.len(), src.ba.len()));
        }
        for (l, &i) in self.indices.iter().enumerate() {
            let region = self.ba.get(i).grow_vect(ngrow);
            self.fabs[l].view_mut().copy_from(&src.fabs[l].view(), &region, scomp, dcomp, ncomp)?;
        }
        Ok(())
    }

    /// Tiles of the local fabs, fab by fab, tiles x-fastest within a fab.
    pub fn mfiter(&self, tile_size: IntVect, include_ghost: bool) -> Result<Vec<MFIter>> {
        if !tile_size.all_ge(IntVect::unit()) {
            return Err(Error::InvalidTileSize(tile_size));
        }
        let mut out = Vec::new();
        for (l, &i) in self.indices.iter().enumerate() {
            let valid = self.ba.get(i);
            let fabbox = valid.grow_vect(self.ngrow);
            let region = if include_ghost { fabbox } else { valid };
            for tile in region.tiles(tile_size) {
                out.push(MFIter { index: i, local_index: l, tilebox: tile, validbox: valid, fabbox, ngrow: self.ngrow });
            }
        }
        Ok(out)
    }

    /// One item per local fab, untiled.
    pub fn mfiter_untiled(&self) -> Vec<MFIter> {
        self.mfiter(IntVect::splat(i32::MAX), false).expect("positive tile size")
    }
}

impl std::fmt::Debug for MultiFab {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiFab")
            .field("nboxes", &self.ba.len())
            .field("nlocal", &self.fabs.len())
            .field("ncomp", &self.ncomp)
            .field("ngrow", &self.ngrow)
            .field("rank", &self.rank)
            .finish()
    }
}

/// One tile of a local fab.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MFIter {
    index: usize,
    local_index: usize,
    tilebox: IndexBox,
    validbox: IndexBox,
    fabbox: IndexBox,
    ngrow: IntVect,
}

impl MFIter {
    /// Global box index.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn local_index(&self) -> usize {
        self.local_index
    }

    pub fn tilebox(&self) -> IndexBox {
        self.tilebox
    }

    pub fn validbox(&self) -> IndexBox {
        self.validbox
    }

    pub fn fabbox(&self) -> IndexBox {
        self.fabbox
    }

    pub fn n_grow_vect(&self) -> IntVect {
        self.ngrow
    }

    /// Tile grown by `n`, extending into ghost cells only at the valid-box faces.
    pub fn growntilebox(&self, n: IntVect) -> IndexBox {
        let mut lo = self.tilebox.lo();
        let mut hi = self.tilebox.hi();
        for d in 0..crate::SPACEDIM {
            if lo[d] == self.validbox.lo()[d] {
                lo[d] -= n[d];
            }
            if hi[d] == self.validbox.hi()[d] {
                hi[d] += n[d];
            }
        }
        IndexBox::with_type(lo, hi, self.tilebox.ixtype())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b1(lo: i32, hi: i32) -> IndexBox {
        IndexBox::new(IntVect::new(lo, 0, 0), IntVect::new(hi, 0, 0))
    }

    fn layout(boxes: Vec<IndexBox>, nranks: usize) -> (Arc<BoxArray>, Arc<DistributionMapping>) {
        let ba = Arc::new(BoxArray::new(boxes).unwrap());
        let dm = Arc::new(DistributionMapping::round_robin(ba.len(), nranks).unwrap());
        (ba, dm)
    }

    #[test]
    fn define_examples() {
        let (ba, dm) = layout(vec![b1(0, 3), b1(4, 7), b1(8, 11), b1(12, 15)], 2);
        let mf = MultiFab::define(&ba, &dm, 1, IntVect::zero(), 0, &ArenaHandle::system()).unwrap();
        assert_eq!(mf.local_indices(), &[0, 2]);
        assert_eq!(mf.fab(2).unwrap().bx(), b1(8, 11));
        assert!(matches!(mf.fab(1), Err(Error::NotLocal(1))));

        let mf = MultiFab::define(&ba, &dm, 1, IntVect::new(1, 0, 0), 0, &ArenaHandle::system()).unwrap();
        assert_eq!(mf.fab(0).unwrap().bx(), b1(-1, 4));
        assert_eq!(mf.const_array(0).unwrap().bx().lo(), IntVect::new(-1, 0, 0));

        let dm3 = Arc::new(DistributionMapping::round_robin(3, 2).unwrap());
        assert!(matches!(
            MultiFab::define(&ba, &dm3, 1, IntVect::zero(), 0, &ArenaHandle::system()),
            Err(Error::LayoutMismatch(4, 3))
        ));
    }

    #[test]
    fn view_reads_setval() {
        let (ba, dm) = layout(vec![IndexBox::from_size(IntVect::splat(4))], 1);
        let mut mf = MultiFab::define(&ba, &dm, 2, IntVect::unit(), 0, &ArenaHandle::system()).unwrap();
        mf.setval(7.0);
        assert_eq!(mf.const_array(0).unwrap().at(1, 2, 3, 1), 7.0);
        assert_eq!(mf.const_array(0).unwrap().at(-1, -1, -1, 0), 7.0);
    }

    #[test]
    fn tiles_examples() {
        let (ba, dm) = layout(vec![IndexBox::from_size(IntVect::splat(16))], 1);
        let mf = MultiFab::define(&ba, &dm, 1, IntVect::zero(), 0, &ArenaHandle::system()).unwrap();
        let t = mf.mfiter(IntVect::splat(8), false).unwrap();
        assert_eq!(t.len(), 8);
        assert_eq!(t.iter().map(|m| m.tilebox().num_pts()).sum::<usize>(), 4096);
        assert_eq!(mf.mfiter(IntVect::splat(64), false).unwrap().len(), 1);

        let (ba, dm) = layout(vec![b1(0, 9)], 1);
        let mf = MultiFab::define(&ba, &dm, 1, IntVect::new(1, 0, 0), 0, &ArenaHandle::system()).unwrap();
        let t: Vec<_> = mf.mfiter(IntVect::new(4, 1, 1), false).unwrap().iter().map(|m| m.tilebox()).collect();
        assert_eq!(t, vec![b1(0, 3), b1(4, 7), b1(8, 9)]);
        let g = mf.mfiter(IntVect::new(4, 1, 1), true).unwrap();
        assert_eq!(g.first().unwrap().tilebox(), b1(-1, 2));
        assert_eq!(g.last().unwrap().tilebox(), b1(7, 10));
        let valid_tiles = mf.mfiter(IntVect::new(4, 1, 1), false).unwrap();
        assert_eq!(valid_tiles[0].growntilebox(IntVect::new(1, 0, 0)), b1(-1, 3));
        assert_eq!(valid_tiles[1].growntilebox(IntVect::new(1, 0, 0)), b1(4, 7));
    }
}
