use std::fmt;
use std::marker::PhantomData;
use std::mem::{self, ManuallyDrop};
use std::ops::{Deref, DerefMut};
use std::ptr;

use super::{ArenaHandle, Block};
use crate::error::Result;

const MIN_ALIGN: usize = 64;

/// Growable array of plain values whose storage comes from an arena and is
/// returned to it on drop.
pub struct ArenaVec<T: Copy> {
    block: Block,
    len: usize,
    cap: usize,
    arena: ArenaHandle,
    _marker: PhantomData<T>,
}

// SAFETY: ArenaVec uniquely owns its block, like Vec<T>.
unsafe impl<T: Copy + Send> Send for ArenaVec<T> {}
unsafe impl<T: Copy + Sync> Sync for ArenaVec<T> {}

fn align_of<T>() -> usize {
    mem::align_of::<T>().max(MIN_ALIGN)
}

impl<T: Copy> ArenaVec<T> {
    pub fn new_in(arena: ArenaHandle) -> Self {
        ArenaVec {
            block: arena.alloc(0, align_of::<T>()).expect("empty block"),
            len: 0,
            cap: 0,
            arena,
            _marker: PhantomData,
        }
    }

    pub fn with_capacity_in(cap: usize, arena: ArenaHandle) -> Result<Self> {
        let block = arena.alloc(cap * mem::size_of::<T>(), align_of::<T>())?;
        Ok(ArenaVec { block, len: 0, cap, arena, _marker: PhantomData })
    }

    pub fn from_elem_in(value: T, n: usize, arena: ArenaHandle) -> Result<Self> {
        let mut v = Self::with_capacity_in(n, arena)?;
        let p = v.ptr();
        for i in 0..n {
            // SAFETY: i < cap.
            unsafe { p.add(i).write(value) };
        }
        v.len = n;
        Ok(v)
    }

    pub fn from_slice_in(src: &[T], arena: ArenaHandle) -> Result<Self> {
        let mut v = Self::with_capacity_in(src.len(), arena)?;
        // SAFETY: capacity is src.len(); regions do not overlap.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), v.ptr(), src.len()) };
        v.len = src.len();
        Ok(v)
    }

    fn ptr(&self) -> *mut T {
        self.block.as_ptr() as *mut T
    }

    pub fn arena(&self) -> &ArenaHandle {
        &self.arena
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn reserve(&mut self, additional: usize) {
        let need = self.len + additional;
        if need <= self.cap {
            return;
        }
        let new_cap = need.max(self.cap * 2).max(8);
        let block = self
            .arena
            .alloc(new_cap * mem::size_of::<T>(), align_of::<T>())
            .unwrap_or_else(|e| panic!("ArenaVec growth failed: {e}"));
        // SAFETY: both blocks hold at least len elements and are distinct.
        unsafe { ptr::copy_nonoverlapping(self.ptr(), block.as_ptr() as *mut T, self.len) };
        let old = mem::replace(&mut self.block, block);
        self.arena.free(old).expect("free of owned block");
        self.cap = new_cap;
    }

    pub fn push(&mut self, v: T) {
        self.reserve(1);
        // SAFETY: len < cap after reserve.
        unsafe { self.ptr().add(self.len).write(v) };
        self.len += 1;
    }

    pub fn extend_from_slice(&mut self, s: &[T]) {
        self.reserve(s.len());
        // SAFETY: capacity checked; `s` cannot alias self while we hold &mut self.
        unsafe { ptr::copy_nonoverlapping(s.as_ptr(), self.ptr().add(self.len), s.len()) };
        self.len += s.len();
    }

    pub fn resize(&mut self, n: usize, value: T) {
        if n <= self.len {
            self.len = n;
            return;
        }
        self.reserve(n - self.len);
        for i in self.len..n {
            // SAFETY: i < cap.
            unsafe { self.ptr().add(i).write(value) };
        }
        self.len = n;
    }

    pub fn truncate(&mut self, n: usize) {
        self.len = self.len.min(n);
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }

    pub fn swap_remove(&mut self, i: usize) -> T {
        let v = self[i];
        let last = self.len - 1;
        self[i] = self[last];
        self.len = last;
        v
    }

    /// Gives up ownership of the storage without freeing it.
    pub fn into_raw_parts(self) -> (Block, ArenaHandle) {
        let me = ManuallyDrop::new(self);
        // SAFETY: `me` is never dropped; the handle is moved out exactly once.
        (me.block, unsafe { ptr::read(&me.arena) })
    }
}

impl<T: Copy> Deref for ArenaVec<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        // SAFETY: the first len elements are initialized; the pointer is
        // aligned and non-null even for empty vectors.
        unsafe { std::slice::from_raw_parts(self.ptr(), self.len) }
    }
}

impl<T: Copy> DerefMut for ArenaVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        // SAFETY: as above, and we hold &mut self.
        unsafe { std::slice::from_raw_parts_mut(self.ptr(), self.len) }
    }
}

impl<T: Copy> Clone for ArenaVec<T> {
    fn clone(&self) -> Self {
        Self::from_slice_in(self, self.arena.clone()).expect("arena clone allocation")
    }
}

impl<T: Copy> Drop for ArenaVec<T> {
    fn drop(&mut self) {
        let _ = self.arena.free(self.block);
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for ArenaVec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

impl<T: Copy + PartialEq> PartialEq for ArenaVec<T> {
    fn eq(&self, other: &Self) -> bool {
        **self == **other
    }
}
