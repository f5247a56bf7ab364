use std::marker::PhantomData;

use super::id::{invalidate_word, is_valid_word, ParticleId};
use crate::arena::{ArenaHandle, ArenaVec};
use crate::{Real, SPACEDIM};

/// Columnar storage for the particles of one (level, grid, tile).
///
/// Every column has one entry per particle: `SPACEDIM` position columns, the
/// packed id word, then the runtime real and int components in registry order.
#[derive(Clone, Debug)]
pub struct ParticleTile {
    pos: [ArenaVec<Real>; SPACEDIM],
    ids: ArenaVec<u64>,
    reals: Vec<ArenaVec<Real>>,
    ints: Vec<ArenaVec<i32>>,
}

fn compact<T: Copy>(col: &mut ArenaVec<T>, keep: &[bool]) {
    let mut w = 0;
    for (r, &k) in keep.iter().enumerate() {
        if k {
            col[w] = col[r];
            w += 1;
        }
    }
    col.truncate(w);
}

impl ParticleTile {
    pub fn new(nreal: usize, nint: usize, arena: &ArenaHandle) -> ParticleTile {
        ParticleTile {
            pos: std::array::from_fn(|_| ArenaVec::new_in(arena.clone())),
            ids: ArenaVec::new_in(arena.clone()),
            reals: (0..nreal).map(|_| ArenaVec::new_in(arena.clone())).collect(),
            ints: (0..nint).map(|_| ArenaVec::new_in(arena.clone())).collect(),
        }
    }

    /// Empty tile with the same columns and arena.
    pub fn empty_like(&self) -> ParticleTile {
        ParticleTile::new(self.nreal(), self.nint(), self.ids.arena())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn nreal(&self) -> usize {
        self.reals.len()
    }

    pub fn nint(&self) -> usize {
        self.ints.len()
    }

    pub fn arena(&self) -> &ArenaHandle {
        self.ids.arena()
    }

    /// Bytes one particle occupies across all columns.
    pub fn bytes_per_particle(&self) -> usize {
        (SPACEDIM + self.nreal()) * std::mem::size_of::<Real>() + 8 + self.nint() * 4
    }

    pub fn reserve(&mut self, n: usize) {
        self.pos.iter_mut().for_each(|c| c.reserve(n));
        self.ids.reserve(n);
        self.reals.iter_mut().for_each(|c| c.reserve(n));
        self.ints.iter_mut().for_each(|c| c.reserve(n));
    }

    pub fn push(&mut self, pos: [Real; SPACEDIM], id: u64, reals: &[Real], ints: &[i32]) {
        assert_eq!(reals.len(), self.nreal(), "real component count");
        assert_eq!(ints.len(), self.nint(), "int component count");
        for d in 0..SPACEDIM {
            self.pos[d].push(pos[d]);
        }
        self.ids.push(id);
        for (c, &v) in self.reals.iter_mut().zip(reals) {
            c.push(v);
        }
        for (c, &v) in self.ints.iter_mut().zip(ints) {
            c.push(v);
        }
    }

    /// Appends particle `i` of `other`, which must have the same columns.
    pub fn push_from(&mut self, other: &ParticleTile, i: usize) {
        for d in 0..SPACEDIM {
            self.pos[d].push(other.pos[d][i]);
        }
        self.ids.push(other.ids[i]);
        for (c, o) in self.reals.iter_mut().zip(&other.reals) {
            c.push(o[i]);
        }
        for (c, o) in self.ints.iter_mut().zip(&other.ints) {
            c.push(o[i]);
        }
    }

    pub fn extend_from(&mut self, other: &ParticleTile) {
        for d in 0..SPACEDIM {
            self.pos[d].extend_from_slice(&other.pos[d]);
        }
        self.ids.extend_from_slice(&other.ids);
        for (c, o) in self.reals.iter_mut().zip(&other.reals) {
            c.extend_from_slice(o);
        }
        for (c, o) in self.ints.iter_mut().zip(&other.ints) {
            c.extend_from_slice(o);
        }
    }

    /// Keeps particle `i` iff `keep[i]`, preserving order.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        self.pos.iter_mut().for_each(|c| compact(c, keep));
        compact(&mut self.ids, keep);
        self.reals.iter_mut().for_each(|c| compact(c, keep));
        self.ints.iter_mut().for_each(|c| compact(c, keep));
    }

    pub fn clear(&mut self) {
        self.pos.iter_mut().for_each(|c| c.clear());
        self.ids.clear();
        self.reals.iter_mut().for_each(|c| c.clear());
        self.ints.iter_mut().for_each(|c| c.clear());
    }

    pub(crate) fn add_real_column(&mut self) {
        let n = self.len();
        let mut c = ArenaVec::new_in(self.arena().clone());
        c.resize(n, 0.0);
        self.reals.push(c);
    }

    pub(crate) fn add_int_column(&mut self) {
        let n = self.len();
        let mut c = ArenaVec::new_in(self.arena().clone());
        c.resize(n, 0);
        self.ints.push(c);
    }

    pub fn pos(&self, d: usize) -> &[Real] {
        &self.pos[d]
    }

    pub fn pos_mut(&mut self, d: usize) -> &mut [Real] {
        &mut self.pos[d]
    }

    /// All position columns at once.
    pub fn positions_mut(&mut self) -> [&mut [Real]; SPACEDIM] {
        let [x, y, z] = &mut self.pos;
        [&mut x[..], &mut y[..], &mut z[..]]
    }

    pub fn position(&self, i: usize) -> [Real; SPACEDIM] {
        std::array::from_fn(|d| self.pos[d][i])
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn ids_mut(&mut self) -> &mut [u64] {
        &mut self.ids
    }

    pub fn id(&self, i: usize) -> ParticleId {
        ParticleId::from_raw(self.ids[i])
    }

    pub fn real(&self, k: usize) -> &[Real] {
        &self.reals[k]
    }

    pub fn real_mut(&mut self, k: usize) -> &mut [Real] {
        &mut self.reals[k]
    }

    pub fn int(&self, k: usize) -> &[i32] {
        &self.ints[k]
    }

    pub fn int_mut(&mut self, k: usize) -> &mut [i32] {
        &mut self.ints[k]
    }

    pub fn get(&self, i: usize) -> ParticleRef<'_> {
        assert!(i < self.len(), "particle {i} out of range");
        ParticleRef { tile: self, i }
    }

    pub(crate) fn ptrs(&mut self) -> TilePtrs {
        TilePtrs {
            len: self.len(),
            pos: std::array::from_fn(|d| self.pos[d].as_mut_ptr()),
            ids: self.ids.as_mut_ptr(),
            reals: self.reals.iter_mut().map(|c| c.as_mut_ptr()).collect(),
            ints: self.ints.iter_mut().map(|c| c.as_mut_ptr()).collect(),
        }
    }
}

/// Read access to one particle of a tile.
#[derive(Clone, Copy)]
pub struct ParticleRef<'a> {
    tile: &'a ParticleTile,
    i: usize,
}

impl ParticleRef<'_> {
    pub fn index(&self) -> usize {
        self.i
    }

    pub fn is_valid(&self) -> bool {
        is_valid_word(self.tile.ids[self.i])
    }

    pub fn id(&self) -> ParticleId {
        self.tile.id(self.i)
    }

    pub fn pos(&self, d: usize) -> Real {
        self.tile.pos[d][self.i]
    }

    pub fn position(&self) -> [Real; SPACEDIM] {
        self.tile.position(self.i)
    }

    pub fn real(&self, k: usize) -> Real {
        self.tile.reals[k][self.i]
    }

    pub fn int(&self, k: usize) -> i32 {
        self.tile.ints[k][self.i]
    }
}

/// Raw column pointers of a tile for the duration of one launch.
pub(crate) struct TilePtrs {
    pub(crate) len: usize,
    pos: [*mut Real; SPACEDIM],
    ids: *mut u64,
    reals: Vec<*mut Real>,
    ints: Vec<*mut i32>,
}

// SAFETY: launches hand each particle index to exactly one invocation, and the
// tile is mutably borrowed for the whole launch.
unsafe impl Send for TilePtrs {}
unsafe impl Sync for TilePtrs {}

impl TilePtrs {
    pub(crate) fn particle(&self, i: usize) -> ParticleMut<'_> {
        debug_assert!(i < self.len);
        ParticleMut { p: self, i, _marker: PhantomData }
    }
}

/// Read/write access to one particle inside a launch.
pub struct ParticleMut<'a> {
    p: &'a TilePtrs,
    i: usize,
    _marker: PhantomData<&'a mut Real>,
}

impl ParticleMut<'_> {
    pub fn index(&self) -> usize {
        self.i
    }

    pub fn is_valid(&self) -> bool {
        // SAFETY: i < len and this invocation owns particle i.
        is_valid_word(unsafe { *self.p.ids.add(self.i) })
    }

    pub fn id(&self) -> ParticleId {
        ParticleId::from_raw(unsafe { *self.p.ids.add(self.i) })
    }

    pub fn invalidate(&mut self) {
        unsafe {
            let w = self.p.ids.add(self.i);
            *w = invalidate_word(*w);
        }
    }

    pub fn pos(&self, d: usize) -> Real {
        assert!(d < SPACEDIM);
        unsafe { *self.p.pos[d].add(self.i) }
    }

    pub fn set_pos(&mut self, d: usize, v: Real) {
        assert!(d < SPACEDIM);
        unsafe { *self.p.pos[d].add(self.i) = v }
    }

    pub fn real(&self, k: usize) -> Real {
        unsafe { *self.p.reals[k].add(self.i) }
    }

    pub fn set_real(&mut self, k: usize, v: Real) {
        unsafe { *self.p.reals[k].add(self.i) = v }
    }

    pub fn int(&self, k: usize) -> i32 {
        unsafe { *self.p.ints[k].add(self.i) }
    }

    pub fn set_int(&mut self, k: usize, v: i32) {
        unsafe { *self.p.ints[k].add(self.i) = v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_are_contiguous() {
        let mut t = ParticleTile::new(2, 1, &ArenaHandle::system());
        for i in 0..10 {
            let id = ParticleId::encode(0, i, true).unwrap().raw();
            t.push([i as Real, 0.0, 0.0], id, &[1.0, 2.0], &[3]);
        }
        let x = t.pos(0);
        let stride = (&x[1] as *const Real as usize) - (&x[0] as *const Real as usize);
        assert_eq!(stride, std::mem::size_of::<Real>());
        let ids = t.ids();
        assert_eq!((&ids[1] as *const u64 as usize) - (&ids[0] as *const u64 as usize), 8);
        assert_eq!(t.len(), 10);
        assert_eq!(t.bytes_per_particle(), 5 * std::mem::size_of::<Real>() + 12);
    }

    #[test]
    fn retain_keeps_order() {
        let mut t = ParticleTile::new(1, 0, &ArenaHandle::system());
        for i in 0..6 {
            t.push([i as Real; 3], i, &[10.0 * i as Real], &[]);
        }
        t.retain_mask(&[true, false, true, false, false, true]);
        assert_eq!(t.ids(), &[0, 2, 5]);
        assert_eq!(t.real(0), &[0.0, 20.0, 50.0]);
        assert_eq!(t.pos(2), &[0.0, 2.0, 5.0]);
    }
}
